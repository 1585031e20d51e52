#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include <neuroshow/event_core.hpp>

using namespace neuroshow;

namespace {

EventStream random_stream(Rng &rng, Resolution res, std::size_t n, std::uint64_t t_max)
{
	EventStream s(n);
	for (auto &e : s) {
		e.t = uniform_index(rng, t_max);
		e.x = static_cast<std::uint16_t>(uniform_index(rng, res.width));
		e.y = static_cast<std::uint16_t>(uniform_index(rng, res.height));
		e.polarity = uniform_index(rng, 2) ? 1 : -1;
	}
	std::sort(s.begin(), s.end(), [](const Event &a, const Event &b) { return a.t < b.t; });
	return s;
}

Trajectory straight_line(double x0, double x1, double y, std::uint64_t t1)
{
	Trajectory tr;
	tr.samples = {{0, HandId::Right, x0, y}, {t1, HandId::Right, x1, y}};
	return tr;
}

}  // namespace

TEST_CASE("frame_accumulate counts events inside the window")
{
	const Resolution res{16, 12};
	SUBCASE("empty stream gives a zero frame")
	{
		Frame f = frame_accumulate({}, 0, 100, res);
		CHECK(f.cells.rows() == 12);
		CHECK(f.cells.cols() == 16);
		CHECK(f.total() == 0);
	}
	SUBCASE("three inside, one outside")
	{
		EventStream s{{10, 5, 5, 1}, {20, 5, 5, -1}, {30, 5, 5, 1}, {100, 5, 5, 1}};
		Frame f = frame_accumulate(s, 0, 100, res);
		CHECK(f.cells(5, 5) == 3);
		CHECK(f.total() == 3);
	}
	SUBCASE("signed mode sums polarity")
	{
		EventStream s{{10, 2, 3, 1}, {20, 2, 3, -1}, {30, 2, 3, -1}};
		CHECK(frame_accumulate(s, 0, 100, res, FrameMode::Signed).cells(3, 2) == -1);
	}
	SUBCASE("out-of-bounds event is rejected")
	{
		EventStream s{{10, 16, 0, 1}};
		CHECK_THROWS_AS(frame_accumulate(s, 0, 100, res), StructuralError);
	}
}

TEST_CASE("adjacent windows partition the stream")
{
	const Resolution res{40, 30};
	Rng rng(11);
	for (int trial = 0; trial < 20; ++trial) {
		auto s = random_stream(rng, res, 500, 10000);
		const std::uint64_t t1 = uniform_index(rng, 10000);
		Frame a = frame_accumulate(s, 0, t1, res);
		Frame b = frame_accumulate(s, t1, 10000, res);
		Frame whole = frame_accumulate(s, 0, 10000, res);
		CHECK((a.cells + b.cells) == whole.cells);
	}
}

TEST_CASE("frame_downsample uses floor mapping and conserves counts")
{
	const Resolution src{240, 180};
	const Resolution chip{86, 65};
	SUBCASE("fig-size example")
	{
		EventStream s{{0, 120, 90, 1}};
		Frame f = frame_downsample(frame_accumulate(s, 0, 1, src), chip);
		CHECK(f.cells(32, 43) == 1);
		CHECK(f.total() == 1);
	}
	SUBCASE("identity at equal resolution")
	{
		Rng rng(3);
		Frame f = frame_accumulate(random_stream(rng, src, 300, 100), 0, 100, src);
		CHECK(frame_downsample(f, src).cells == f.cells);
	}
	SUBCASE("random frames keep their sum")
	{
		Rng rng(5);
		for (int trial = 0; trial < 10; ++trial) {
			Frame f = frame_accumulate(random_stream(rng, src, 2000, 100), 0, 100, src);
			std::int64_t brute = 0;
			for (int y = 0; y < src.height; ++y) {
				for (int x = 0; x < src.width; ++x) {
					brute += f.cells(y, x);
				}
			}
			CHECK(frame_downsample(f, chip).total() == brute);
		}
	}
	SUBCASE("upsampling is rejected")
	{
		Frame f(chip, 0, 1);
		CHECK_THROWS_AS(frame_downsample(f, src), StructuralError);
	}
}

TEST_CASE("depth_mask keeps near-field events")
{
	const Resolution res{4, 1};
	DepthFrame depth(res);
	depth.depth << 2.5, 3.5, DepthFrame::kNoReading, 0.31;
	EventStream s{{0, 0, 0, 1}, {1, 1, 0, 1}, {2, 2, 0, 1}, {3, 3, 0, 1}};

	auto kept = depth_mask(s, res, depth, 0.3, DepthFrame::kDefaultFarMax);
	REQUIRE(kept.size() == 2);
	CHECK(kept[0].x == 0);
	CHECK(kept[1].x == 3);

	Frame f = depth_mask(frame_accumulate(s, 0, 10, res), depth, 0.3, 3.0);
	CHECK(f.cells(0, 0) == 1);
	CHECK(f.cells(0, 1) == 0);
	CHECK(f.cells(0, 2) == 0);

	SUBCASE("widening the range never removes events")
	{
		Rng rng(8);
		const Resolution r2{20, 10};
		DepthFrame d2(r2);
		for (int y = 0; y < 10; ++y) {
			for (int x = 0; x < 20; ++x) {
				d2.depth(y, x) = 4.0 * unit_uniform(rng);
			}
		}
		auto stream = random_stream(rng, r2, 400, 1000);
		std::size_t prev = 0;
		for (double far : {0.5, 1.0, 2.0, 3.0, 4.5}) {
			const std::size_t n = depth_mask(stream, r2, d2, 0.2, far).size();
			CHECK(n >= prev);
			prev = n;
		}
	}
}

TEST_CASE("synth_hand_events")
{
	const Resolution res{64, 48};
	SynthParams p;
	p.blob_radius = 6.0;

	SUBCASE("stationary blob produces nothing")
	{
		auto s = synth_hand_events(straight_line(30, 30, 24, 50000), p, res, 1);
		CHECK(s.empty());
	}
	SUBCASE("rightward motion: ON at the leading edge, OFF at the trailing edge")
	{
		const std::uint64_t t1 = 40000;
		auto tr = straight_line(20, 40, 24, t1);
		auto s = synth_hand_events(tr, p, res, 2);
		REQUIRE(!s.empty());
		int on_lead = 0, off_trail = 0, wrong = 0;
		for (const Event &e : s) {
			const double cx = tr.position_at(HandId::Right, e.t)->x();
			if (e.x > cx) {
				(e.polarity > 0 ? on_lead : wrong)++;
			} else if (e.x < cx) {
				(e.polarity < 0 ? off_trail : wrong)++;
			}
		}
		CHECK(on_lead > 0);
		CHECK(off_trail > 0);
		CHECK(wrong == 0);
	}
	SUBCASE("events lie on the blob rim")
	{
		auto tr = straight_line(15, 45, 20, 60000);
		auto s = synth_hand_events(tr, p, res, 3);
		REQUIRE(!s.empty());
		// Speed is 0.5 px/ms, so within one micro-step the rim moves half a pixel.
		for (const Event &e : s) {
			const auto c = *tr.position_at(HandId::Right, e.t);
			const double dist = std::hypot(e.x - c.x(), e.y - c.y());
			CHECK(std::abs(dist - p.blob_radius) <= 1.5);
		}
	}
	SUBCASE("same seed, same stream")
	{
		auto tr = straight_line(10, 50, 30, 30000);
		CHECK(synth_hand_events(tr, p, res, 9) == synth_hand_events(tr, p, res, 9));
		auto s = synth_hand_events(tr, p, res, 9);
		CHECK(std::is_sorted(s.begin(), s.end(),
		                     [](const Event &a, const Event &b) { return a.t < b.t; }));
	}
}

TEST_CASE("inject_distractors adds the requested fraction")
{
	const Resolution res{64, 48};
	auto tr = straight_line(10, 50, 30, 30000);
	auto s = synth_hand_events(tr, {}, res, 4);
	auto noisy = inject_distractors(s, 0.2, res, 5);
	CHECK(noisy.size() == s.size() + static_cast<std::size_t>(std::llround(0.2 * s.size())));
	CHECK(std::is_sorted(noisy.begin(), noisy.end(),
	                     [](const Event &a, const Event &b) { return a.t < b.t; }));
	CHECK(inject_distractors(s, 0.0, res, 5) == s);
}

TEST_CASE("EVT1 codec")
{
	const Resolution res{240, 180};
	SUBCASE("empty stream is a bare header")
	{
		CHECK(encode_evt({}, res).size() == 12);
	}
	SUBCASE("single event round trip")
	{
		EventStream s{{123456789012ull, 239, 179, -1}};
		Bytes b = encode_evt(s, res);
		CHECK(b.size() == 12 + 16);
		EventFile f = decode_evt(b);
		CHECK(f.resolution == res);
		CHECK(f.events == s);
		CHECK(encode_evt(f.events, f.resolution) == b);
	}
	SUBCASE("random streams round trip")
	{
		Rng rng(21);
		auto s = random_stream(rng, res, 1000, 1u << 30);
		CHECK(decode_evt(encode_evt(s, res)).events == s);
	}
	SUBCASE("bad magic, truncation and bad polarity are errors")
	{
		EventStream s{{5, 1, 2, 1}};
		Bytes b = encode_evt(s, res);
		Bytes bad = b;
		bad[0] = 'X';
		CHECK_THROWS_AS(decode_evt(bad), StructuralError);
		Bytes cut(b.begin(), b.end() - 1);
		CHECK_THROWS_AS(decode_evt(cut), StructuralError);
		Bytes pol = b;
		pol[12 + 12] = 0;
		CHECK_THROWS_AS(decode_evt(pol), StructuralError);
	}
}

TEST_CASE("trajectory text form and interpolation")
{
	const std::string text =
	    "# two hands\n"
	    "unit pixels\n"
	    "0 right 10 20\n"
	    "1000 right 20 40\n"
	    "0 left 100 50\n"
	    "2000 left 100 70\n";
	Trajectory tr = parse_trajectory(text);
	CHECK(tr.unit == LengthUnit::Pixels);
	CHECK(tr.samples.size() == 4);
	auto p = tr.position_at(HandId::Right, 250);
	REQUIRE(p);
	CHECK(p->x() == doctest::Approx(12.5));
	CHECK(p->y() == doctest::Approx(25.0));
	CHECK_FALSE(tr.position_at(HandId::Right, 1001));
	CHECK(tr.position_at(HandId::Left, 1000)->y() == doctest::Approx(60.0));

	Trajectory again = parse_trajectory(format_trajectory(tr));
	REQUIRE(again.samples.size() == tr.samples.size());
	for (std::size_t i = 0; i < tr.samples.size(); ++i) {
		CHECK(again.samples[i].t == tr.samples[i].t);
		CHECK(again.samples[i].x == tr.samples[i].x);
	}

	CHECK_THROWS_AS(parse_trajectory("unit pixels\n5 right 0 0\n5 right 1 1\n"), StructuralError);
	CHECK_THROWS_AS(parse_trajectory("0 right 0 0\n"), StructuralError);
}

TEST_CASE("window_slice returns the half-open range")
{
	EventStream s{{1}, {5}, {5}, {9}, {12}};
	auto w = window_slice(s, 5, 12);
	REQUIRE(w.size() == 3);
	CHECK(w.front().t == 5);
	CHECK(w.back().t == 9);
}
