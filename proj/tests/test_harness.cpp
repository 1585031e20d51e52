#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <thread>

#include <neuroshow/harness.hpp>

using namespace neuroshow;

namespace {

std::vector<ScenarioStep> walk(Intention mode, std::uint64_t perform_ms)
{
	return {{0, Intention::StartConversation},
	        {100, mode},
	        {100 + perform_ms, Intention::Done}};
}

Score short_score()
{
	Score s;
	s.notes = {{60, 250}, {64, 250}, {67, 250}, {72, 250}};
	return s;
}

SimConfig base_config(std::uint64_t seed = 11)
{
	SimConfig cfg;
	cfg.seed = seed;
	return cfg;
}

}  // namespace

TEST_CASE("power_ratio")
{
	CHECK(std::round(power_ratio(6.5, 120, 10) * 100) / 100 == 5.42);
	CHECK(std::round(power_ratio(6.5, 48, 10) * 100) / 100 == 13.54);
	CHECK(power_ratio(6.5, 650, 1) == doctest::Approx(10.0));
	CHECK_THROWS_AS(power_ratio(6.5, 0, 10), ConfigError);
	CHECK_THROWS_AS(power_ratio(6.5, 48, 0), ConfigError);
}

TEST_CASE("real-time factor")
{
	auto slow = metrics_report(4.5, 10.0);
	CHECK(slow.rtf == doctest::Approx(0.45));
	CHECK(slow.sub_real_time);
	CHECK(format_rtf(slow).find("sub-real-time") != std::string::npos);
	auto fast = metrics_report(10.0, 5.0);
	CHECK(fast.rtf == 2.0);
	CHECK_FALSE(fast.sub_real_time);
	CHECK_THROWS_AS(metrics_report(1.0, 0.0), ConfigError);
}

TEST_CASE("protocol bench matches the frame arithmetic")
{
	auto bench = protocol_bench(aer::ChannelConfig{});
	REQUIRE(bench.rows.size() == 5);
	CHECK(bench.rows[0].profile == aer::Profile::Raw);
	CHECK(bench.rows[0].measured == 4.0);
	const double want[] = {30.0, 10.2, 8.22, 8.022};
	for (std::size_t i = 1; i < bench.rows.size(); ++i) {
		CHECK(bench.rows[i].measured == doctest::Approx(want[i - 1]).epsilon(1e-12));
		CHECK(std::abs(bench.rows[i].measured - bench.rows[i].expected) < 0.01);
	}
	CHECK(bench.stats.accounted() == bench.stats.sent);
	CHECK(!format_bench(bench).empty());
}

TEST_CASE("single-bit fuzz finds no silent corruption")
{
	auto f = fuzz_single_bit_flips(10, 3);
	CHECK(f.trials == (22 + 80) * 8);
	CHECK(f.detected == f.trials);
	CHECK(f.silent == 0);
}

TEST_CASE("solo performance follows the score within one cent")
{
	auto r = run_show(base_config(), walk(Intention::AskSolo, 1000), short_score());
	REQUIRE(r.solo_cents.count > 0);
	CHECK(r.solo_cents.max <= 1.0);
	CHECK(r.windows == 0);
	CHECK(r.link.sent == 0);
	CHECK(!r.control_trace.empty());
}

TEST_CASE("duet on a lossless link")
{
	const auto steps = walk(Intention::AskDuet, 1000);
	auto r = run_show(base_config(), steps, short_score());
	CHECK(r.windows == 100);
	CHECK(r.link.sent == r.windows);
	CHECK(r.link.delivered == r.link.sent);
	CHECK(r.link.lost == 0);
	CHECK(r.duet_cents.count > 0);
	CHECK(r.cents_per_pixel == doctest::Approx(1200.0 * 0.004 / 0.24));
	CHECK(r.duet_cents.mean() <= r.cents_per_pixel * r.duet_tracking_px.mean() + 1.0);
	CHECK(r.latency.closure_max_abs_us == 0);
	CHECK(r.latency.end_to_end.mean() ==
	      doctest::Approx(r.latency.sensor.mean() + r.latency.tracker.mean() +
	                      r.latency.link.mean() + r.latency.orchestrator.mean() +
	                      r.latency.synth.mean()));

	SUBCASE("energy is constants times active time")
	{
		const EnergyConstants en;
		CHECK(r.tracker_active_s == doctest::Approx(r.windows * 0.01));
		CHECK(r.edge_energy_j == doctest::Approx(en.edge_tracker_w * r.tracker_active_s));
		CHECK(r.gpu_energy_j_min == doctest::Approx(en.gpu_w_min * r.tracker_active_s));
		CHECK(r.gpu_energy_j_max == doctest::Approx(en.gpu_w_max * r.tracker_active_s));
		CHECK(r.power_ratio_min == doctest::Approx(6500.0 / 1200.0));
		CHECK(r.power_ratio_max == doctest::Approx(6500.0 / 480.0));
	}
	SUBCASE("fixed seed gives a byte-identical report, threaded or not")
	{
		const std::string a = format_report(r, false);
		const std::string b = format_report(run_show(base_config(), steps, short_score()), false);
		SimConfig threaded = base_config();
		threaded.threaded = true;
		threaded.channel_capacity = 2;
		const std::string c = format_report(run_show(threaded, steps, short_score()), false);
		CHECK(a == b);
		CHECK(a == c);
		CHECK(a.find("wall.") == std::string::npos);
		CHECK(format_report(r, true).find("wall.time_s=") != std::string::npos);
	}
}

TEST_CASE("lossy link still accounts for every frame")
{
	SimConfig cfg = base_config(5);
	cfg.channel.loss_p = 0.1;
	cfg.channel.bitflip_p = 0.001;
	cfg.channel.delay_jitter_us = 2000;
	cfg.channel.reorder_window = 3;
	auto r = run_show(cfg, walk(Intention::AskDuet, 1000), short_score());
	CHECK(r.link.sent == r.windows);
	CHECK(r.link.accounted() == r.link.sent);
	CHECK(r.link.lost + r.link.corrupted_dropped > 0);
	CHECK(r.duet_windows_without_pitch <= r.windows);
}

TEST_CASE("calibration recovers the instrument law")
{
	SimConfig cfg = base_config();
	cfg.calibration = {0.30, note_freq(60), 0.30};
	const std::vector<ScenarioStep> steps{{0, Intention::StartConversation},
	                                      {10, Intention::RequestCalibration},
	                                      {500, Intention::Done},
	                                      {600, Intention::AskSolo},
	                                      {1600, Intention::Done}};
	auto r = run_show(cfg, steps, short_score());
	REQUIRE(r.fitted);
	CHECK(std::abs(r.fitted->d_ref - cfg.instrument.d_ref) <= 1e-9 * cfg.instrument.d_ref);
	CHECK(std::abs(r.fitted->octave_dist - cfg.instrument.octave_dist) <=
	      1e-9 * cfg.instrument.octave_dist);
	CHECK(r.solo_cents.max <= 1.0);
	CHECK(r.cents_per_pixel == doctest::Approx(1200.0 * 0.004 / 0.30));
}

TEST_CASE("report text round trip")
{
	auto r = run_show(base_config(), walk(Intention::AskSolo, 500), short_score());
	const std::string text = format_report(r, false);
	auto kv = parse_report(text);
	CHECK(kv.at("seed") == "11");
	CHECK(kv.at("fsm.final_state") == "conversing");
	CHECK(kv.at("energy.power_ratio_min") == "5.42");
	CHECK(kv.at("energy.power_ratio_max") == "13.54");
	CHECK(!render_report(kv).empty());
	CHECK_THROWS(parse_report("no equals sign\n"));
}

TEST_CASE("configuration")
{
	SimConfig cfg;
	CHECK_THROWS_AS(cfg.validate(), ConfigError);

	auto loaded = load_sim_config(R"({"seed": 3, "threaded": true,
	    "tracker": {"detector": "sd_net", "window_us": 5000},
	    "channel": {"loss_p": 0.25, "receiver_window": 4},
	    "energy": {"boards": 5}})");
	CHECK(loaded.seed == 3u);
	CHECK(loaded.threaded);
	CHECK(loaded.tracker.detector == DetectorKind::SdNet);
	CHECK(loaded.tracker.window_us == 5000);
	CHECK(loaded.channel.loss_p == 0.25);
	CHECK(loaded.receiver_window == 4);
	CHECK(loaded.energy.boards == 5);

	CHECK_THROWS_AS(load_sim_config(R"({"sead": 3})"), ConfigError);
	CHECK_THROWS_AS(load_sim_config(R"({"tracker": {"gain": 1}})"), ConfigError);
	CHECK_THROWS_AS(load_sim_config("{"), ConfigError);
	auto bad = load_sim_config(R"({"seed": 1, "energy": {"cluster_kw": -1}})");
	CHECK_THROWS_AS(bad.validate(), ConfigError);
	CHECK_NOTHROW(loaded.validate());
}

TEST_CASE("bounded channel hands items across threads in order")
{
	BoundedChannel<int> ch(2);
	std::vector<int> got;
	std::thread consumer([&] {
		while (auto v = ch.pop()) {
			got.push_back(*v);
		}
	});
	for (int i = 0; i < 1000; ++i) {
		ch.push(i);
	}
	ch.close();
	consumer.join();
	REQUIRE(got.size() == 1000);
	for (int i = 0; i < 1000; ++i) {
		CHECK(got[i] == i);
	}
}

TEST_CASE("performer tremble stays orthogonal to the controlled axis")
{
	SimConfig cfg = base_config();
	const Score score = short_score();
	auto traj = performer_trajectory(score, cfg);
	const auto metric = trajectory_to_pixels(
	    score_to_trajectory(score, cfg.instrument, cfg.volume, cfg.trajectory), cfg.geometry);
	for (const auto &s : traj.samples) {
		const auto p = metric.position_at(s.hand, s.t);
		REQUIRE(p);
		if (s.hand == HandId::Right) {
			CHECK(s.x == doctest::Approx(p->x()));
			CHECK(std::abs(s.y - p->y()) <= cfg.tremble_px + 1e-9);
		} else {
			CHECK(s.y == doctest::Approx(p->y()));
			CHECK(std::abs(s.x - p->x()) <= cfg.tremble_px + 1e-9);
		}
	}
}
