#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include <neuroshow/tracker.hpp>

using namespace neuroshow;

namespace {

const Resolution kChip{86, 65};

Frame blob_frame(std::initializer_list<std::pair<int, int>> centers)
{
	Frame f(kChip, 0, 1);
	for (auto [cx, cy] : centers) {
		for (int dy = -2; dy <= 2; ++dy) {
			for (int dx = -2; dx <= 2; ++dx) {
				f.cells(cy + dy, cx + dx) += 3 - std::max(std::abs(dx), std::abs(dy));
			}
		}
	}
	return f;
}

bool is_local_max(const GridD &g, int x, int y)
{
	for (int dy = -1; dy <= 1; ++dy) {
		for (int dx = -1; dx <= 1; ++dx) {
			if ((dx || dy) && g(y + dy, x + dx) >= g(y, x)) {
				return false;
			}
		}
	}
	return true;
}

HandEstimate step_window(Tracker &tr, const EventStream &events, std::uint64_t k)
{
	const std::uint64_t t0 = k * tr.config().window_us;
	return tr.step(window_slice(events, t0, t0 + tr.config().window_us), t0);
}

}  // namespace

TEST_CASE("heatmap detector")
{
	auto blob = HeatmapDetector::blob(kChip, 2.0, 2.0);
	auto sd = HeatmapDetector::sd_net(kChip, make_blur_net(kChip, 2.0), 0.0, 2.0);

	SUBCASE("zero frame gives zero heatmap")
	{
		Frame zero(kChip, 0, 1);
		CHECK(blob.detect(zero).cwiseAbs().maxCoeff() == 0.0);
		CHECK(sd.detect(zero).cwiseAbs().maxCoeff() == 0.0);
	}
	SUBCASE("single blob peaks at its centre")
	{
		Frame f = blob_frame({{43, 32}});
		for (auto *d : {&blob, &sd}) {
			GridD h = d->detect(f);
			CHECK(h.minCoeff() >= 0.0);
			CHECK(heatmap_argmax(h, 0, kChip.width) == Eigen::Vector2d(43, 32));
		}
	}
	SUBCASE("two blobs give two local maxima")
	{
		GridD h = blob.detect(blob_frame({{20, 30}, {65, 30}}));
		CHECK(is_local_max(h, 20, 30));
		CHECK(is_local_max(h, 65, 30));
	}
	SUBCASE("sigma-delta network at zero threshold matches the blob detector")
	{
		Rng rng(1);
		for (int k = 0; k < 5; ++k) {
			Frame f(kChip, 0, 1);
			for (int i = 0; i < 200; ++i) {
				f.cells(uniform_index(rng, 65), uniform_index(rng, 86)) += 1;
			}
			CHECK((blob.detect(f) - sd.detect(f)).cwiseAbs().maxCoeff() < 1e-9);
		}
		CHECK(!sd.spike_counts().empty());
		CHECK(blob.spike_counts().empty());
	}
	SUBCASE("wrong resolution")
	{
		CHECK_THROWS_AS(blob.detect(Frame({40, 30}, 0, 1)), StructuralError);
		CHECK_THROWS_AS(HeatmapDetector::sd_net(kChip, make_blur_net({10, 10}, 2.0), 0.0, 2.0),
		                StructuralError);
	}
}

TEST_CASE("assign_hands")
{
	Peak a, b;
	a.centroid = {70, 20};
	a.mass = 10;
	b.centroid = {10, 25};
	b.mass = 5;
	const std::vector<Peak> two{a, b};

	auto mirrored = assign_hands(two, true);
	REQUIRE(mirrored.size() == 2);
	CHECK(mirrored[0].label == HandLabel::Pitch);
	CHECK(mirrored[0].x == 10);
	CHECK(mirrored[1].label == HandLabel::Volume);
	CHECK(mirrored[1].x == 70);

	auto direct = assign_hands(two, false);
	REQUIRE(direct.size() == 2);
	for (const auto &h : direct) {
		const auto m = std::find_if(mirrored.begin(), mirrored.end(),
		                             [&](const HandPosition &p) { return p.x == h.x; });
		CHECK(m->label != h.label);
		CHECK(m->y == h.y);
	}

	auto single = assign_hands(std::vector<Peak>{a}, false);
	REQUIRE(single.size() == 1);
	CHECK(single[0].label == HandLabel::Pitch);
	CHECK(assign_hands(std::vector<Peak>{}, true).empty());
	CHECK(hand_for(HandLabel::Pitch) == HandId::Right);
}

TEST_CASE("upscale stays within one chip cell of the original pixel")
{
	const Resolution input{240, 180};
	const double span_x = 240.0 / 86.0, span_y = 180.0 / 65.0;
	for (int y = 0; y < input.height; ++y) {
		for (int x = 0; x < input.width; ++x) {
			const Eigen::Vector2d cell(std::floor(x * 86.0 / 240.0), std::floor(y * 65.0 / 180.0));
			const Eigen::Vector2d up = upscale(cell, kChip, input);
			CHECK(std::abs(up.x() - x) <= span_x);
			CHECK(std::abs(up.y() - y) <= span_y);
		}
	}
}

TEST_CASE("single stationary-ish hand is located within the blob radius")
{
	const Resolution res{240, 180};
	auto truth = make_waving_trajectory({{HandId::Right, {100, 80}, {10, 6}, 1.0, 0.0}}, 600000);
	SynthParams p;
	p.blob_radius = 8.0;
	auto events = synth_hand_events(truth, p, res, 3);
	TrackerConfig cfg;
	auto ev = evaluate_tracking(events, truth, cfg, 50);
	CHECK(ev.missing == 0);
	CHECK(ev.mean_error_px <= p.blob_radius);
}

TEST_CASE("lost input holds the last estimate with decaying confidence")
{
	const Resolution res{240, 180};
	auto truth = make_waving_trajectory({{HandId::Right, {120, 90}, {20, 0}, 2.0, 0.0}}, 200000);
	auto events = synth_hand_events(truth, {}, res, 4);
	TrackerConfig cfg;
	Tracker tr(cfg);
	HandEstimate last;
	for (std::uint64_t k = 0; k < 20; ++k) {
		last = step_window(tr, events, k);
	}
	REQUIRE(last.hands.size() == 1);

	// Run on empty windows until the field itself lets go.
	const EventStream none;
	std::uint64_t k = 20;
	HandEstimate est = step_window(tr, none, k++);
	while (!tr.last_peaks().empty() && k < 200) {
		est = step_window(tr, none, k++);
	}
	REQUIRE(tr.last_peaks().empty());
	REQUIRE(est.hands.size() == 1);
	const HandPosition first = est.hands[0];
	const double before = first.confidence / cfg.confidence_decay;
	for (int i = 1; i < 10; ++i) {
		est = step_window(tr, none, k++);
	}
	REQUIRE(est.hands.size() == 1);
	CHECK(est.hands[0].x == first.x);
	CHECK(est.hands[0].y == first.y);
	CHECK(est.hands[0].confidence == doctest::Approx(before * std::pow(0.5, 10)));
	CHECK(std::pow(0.5, 10) == doctest::Approx(0.001).epsilon(0.03));
}

TEST_CASE("two waving hands give two labelled estimates per step")
{
	const Resolution res{240, 180};
	auto truth = two_hand_wave(res, 1000000);
	auto events = synth_hand_events(truth, {}, res, 5);
	Tracker tr{TrackerConfig{}};
	int two = 0;
	for (std::uint64_t k = 0; k < 100; ++k) {
		auto est = step_window(tr, events, k);
		if (k >= 10) {
			REQUIRE(est.hands.size() == 2);
			const auto *pitch = est.find(HandLabel::Pitch);
			const auto *vol = est.find(HandLabel::Volume);
			REQUIRE(pitch);
			REQUIRE(vol);
			CHECK(pitch->x < vol->x);
			for (const auto &h : est.hands) {
				CHECK(h.x >= 0);
				CHECK(h.x <= 239);
				CHECK(h.y >= 0);
				CHECK(h.y <= 179);
				CHECK(h.confidence >= 0.0);
				CHECK(h.confidence <= 1.0);
			}
			++two;
		}
	}
	CHECK(two == 90);
}

TEST_CASE("field filtering reduces track variance under distractors")
{
	const Resolution res{240, 180};
	auto truth = two_hand_wave(res, 1500000);
	auto events = inject_distractors(synth_hand_events(truth, {}, res, 6), 0.2, res, 7);
	auto ev = evaluate_tracking(events, truth, TrackerConfig{}, 150);
	CHECK(ev.missing == 0);
	CHECK(ev.dnf_variance < ev.raw_variance);
}

TEST_CASE("tracker runs are deterministic")
{
	const Resolution res{240, 180};
	auto truth = two_hand_wave(res, 300000);
	auto events = synth_hand_events(truth, {}, res, 8);
	std::string a, b;
	for (std::string *out : {&a, &b}) {
		Tracker tr{TrackerConfig{}};
		for (std::uint64_t k = 0; k < 30; ++k) {
			*out += format_estimate(step_window(tr, events, k));
		}
	}
	CHECK(a == b);
	CHECK(!a.empty());
}

TEST_CASE("depth gating removes far-field events")
{
	const Resolution res{240, 180};
	auto truth = two_hand_wave(res, 200000);
	auto events = synth_hand_events(truth, {}, res, 9);
	TrackerConfig cfg;
	cfg.depth_range = DepthRange{0.3, 3.0};
	Tracker tr(cfg);
	DepthFrame far(res);
	far.depth.setConstant(5.0);
	tr.set_depth(far);
	for (std::uint64_t k = 0; k < 10; ++k) {
		CHECK(step_window(tr, events, k).hands.empty());
	}
	CHECK(tr.events_seen() == 0);
	CHECK_THROWS_AS(tr.set_depth(DepthFrame({10, 10})), StructuralError);
}

TEST_CASE("estimate text form and overlay")
{
	HandEstimate est;
	est.t = 10000;
	est.hands = {{HandLabel::Pitch, 12.5, 40.25, 0.75}};
	CHECK(format_estimate(est) == "10000,pitch_hand,12.500,40.250,0.750000\n");

	Tracker tr{TrackerConfig{}};
	Bytes pgm = tr.overlay_pgm();
	const std::string header = "P5\n86 65\n65535\n";
	CHECK(pgm.size() == header.size() + 2 * 86 * 65);
}

TEST_CASE("tracker config validation")
{
	TrackerConfig cfg;
	cfg.chip_res = {300, 65};
	CHECK_THROWS_AS(cfg.validate(), ConfigError);
	cfg = {};
	cfg.window_us = 0;
	CHECK_THROWS_AS(Tracker{cfg}, ConfigError);
	cfg = {};
	cfg.peak_threshold = -6.0;
	CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
