// Command-line front end: event synthesis, tracking, show simulation,
// protocol benchmarks, power arithmetic and report rendering.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include <neuroshow/aer_transport.hpp>
#include <neuroshow/event_core.hpp>
#include <neuroshow/harness.hpp>
#include <neuroshow/sigma_delta.hpp>
#include <neuroshow/theremin.hpp>
#include <neuroshow/tracker.hpp>

namespace fs = std::filesystem;
using namespace neuroshow;

namespace {

std::string slurp(const std::string &path)
{
	Bytes b = read_file_bytes(path);
	return {b.begin(), b.end()};
}

void spit(const std::string &path, const std::string &text)
{
	write_file_bytes(path, ByteView(reinterpret_cast<const std::uint8_t *>(text.data()), text.size()));
}

Resolution parse_resolution(const std::string &s)
{
	int w = 0;
	int h = 0;
	if (std::sscanf(s.c_str(), "%dx%d", &w, &h) != 2) {
		throw ConfigError("resolution must look like 240x180");
	}
	Resolution r{w, h};
	r.validate();
	return r;
}

struct SynthOpts {
	std::string trajectory;
	std::string out;
	std::string resolution = "240x180";
	std::optional<std::uint64_t> seed;
	double radius = 8.0;
	double threshold = 0.15;
	double distractors = 0.0;
	double duration_s = 5.0;
};

int cmd_synth(const SynthOpts &o)
{
	const Resolution res = parse_resolution(o.resolution);
	Trajectory traj;
	if (o.trajectory.empty()) {
		traj = two_hand_wave(res, static_cast<std::uint64_t>(o.duration_s * 1e6));
	} else {
		traj = parse_trajectory(slurp(o.trajectory));
	}
	SynthParams params;
	params.blob_radius = o.radius;
	params.contrast_threshold = o.threshold;
	EventStream events = synth_hand_events(traj, params, res, *o.seed);
	if (o.distractors > 0.0) {
		events = inject_distractors(events, o.distractors, res, *o.seed + 1);
	}
	write_evt(o.out, events, res);
	std::cout << "wrote " << events.size() << " events at " << to_string(res) << " to " << o.out << '\n';
	return 0;
}

struct TrackOpts {
	std::string in;
	std::string out;
	std::string overlay_dir;
	std::string weights;
	std::string detector = "blob";
	std::uint64_t window_us = 10000;
	int overlay_every = 50;
};

int cmd_track(const TrackOpts &o)
{
	EventFile file = read_evt(o.in);
	TrackerConfig cfg;
	cfg.input_res = file.resolution;
	cfg.window_us = o.window_us;
	cfg.chip_res = {std::max(1, file.resolution.width * 86 / 240),
	                std::max(1, file.resolution.height * 65 / 180)};
	std::optional<DenseNet<double>> net;
	if (o.detector == "sd_net") {
		cfg.detector = DetectorKind::SdNet;
		if (!o.weights.empty()) {
			std::istringstream in(slurp(o.weights));
			net = read_dense_net(in);
		}
	} else if (o.detector != "blob") {
		throw ConfigError("detector must be 'blob' or 'sd_net'");
	}
	Tracker tracker(cfg, std::move(net));
	if (!o.overlay_dir.empty()) {
		fs::create_directories(o.overlay_dir);
	}
	std::ostringstream csv;
	csv << "t_us,label,x,y,confidence\n";
	const std::uint64_t end = file.events.empty() ? 0 : file.events.back().t + 1;
	std::size_t windows = 0;
	for (std::uint64_t t0 = file.events.empty() ? 0 : file.events.front().t; t0 < end;
	     t0 += cfg.window_us) {
		csv << format_estimate(tracker.step(file.events, t0));
		if (!o.overlay_dir.empty() && windows % static_cast<std::size_t>(o.overlay_every) == 0) {
			char name[64];
			std::snprintf(name, sizeof name, "overlay_%06zu.pgm", windows);
			write_file_bytes(fs::path(o.overlay_dir) / name, tracker.overlay_pgm());
		}
		++windows;
	}
	if (o.out.empty()) {
		std::cout << csv.str();
	} else {
		spit(o.out, csv.str());
		std::cout << "tracked " << windows << " windows into " << o.out << '\n';
	}
	const auto spikes = tracker.detector().spike_counts();
	for (std::size_t i = 0; i < spikes.size(); ++i) {
		std::cerr << "layer " << i << " spikes " << spikes[i] << '\n';
	}
	return 0;
}

struct ShowOpts {
	std::string config;
	std::string scenario;
	std::string score;
	std::string report;
	std::string wav;
	std::optional<std::uint64_t> seed;
	bool threaded = false;
	bool single_threaded = false;
	int sample_rate = 16000;
	double vibrato_cents = 0.0;
	double vibrato_hz = 5.5;
};

int cmd_show(const ShowOpts &o)
{
	SimConfig cfg = o.config.empty() ? SimConfig{} : load_sim_config(slurp(o.config));
	cfg.seed = o.seed;
	if (!o.scenario.empty()) {
		cfg.scenario_path = o.scenario;
	}
	if (!o.score.empty()) {
		cfg.score_path = o.score;
	}
	if (o.threaded) {
		cfg.threaded = true;
	}
	if (o.single_threaded) {
		cfg.threaded = false;
	}
	RunReport report = run_show(cfg);
	const std::string kv = format_report(report, true);
	if (!o.report.empty()) {
		spit(o.report, format_report(report, false));
	}
	std::cout << render_report(parse_report(kv));
	if (!o.wav.empty()) {
		std::optional<Vibrato> vib;
		if (o.vibrato_cents > 0.0) {
			vib = Vibrato{o.vibrato_cents, o.vibrato_hz};
		}
		const auto pcm = render_trace(report.control_trace, o.sample_rate, vib);
		write_file_bytes(o.wav, encode_wav(pcm, o.sample_rate));
		std::cout << "wrote " << pcm.size() << " samples to " << o.wav << '\n';
	}
	return 0;
}

struct ProtoOpts {
	aer::ChannelConfig channel;
	std::uint64_t events = 1000;
	std::size_t records = 100;
	std::uint64_t seed = 1;
	std::string in;
};

int cmd_proto_bench(const ProtoOpts &o)
{
	aer::ChannelConfig ch = o.channel;
	ch.seed = o.seed;
	std::cout << format_bench(protocol_bench(ch, o.events));
	return 0;
}

int cmd_proto_fuzz(const ProtoOpts &o)
{
	const FuzzResult r = fuzz_single_bit_flips(o.records, o.seed);
	std::cout << "single-bit flips over a " << o.records << "-record frame: " << r.trials
	          << " trials, " << r.detected << " detected, " << r.silent << " silent\n";
	return r.silent == 0 ? 0 : 1;
}

int cmd_proto_hexdump(const ProtoOpts &o)
{
	Bytes frame;
	if (!o.in.empty()) {
		frame = read_file_bytes(o.in);
	} else {
		Rng rng(o.seed);
		std::vector<aer::SafeRecord> recs(o.records);
		for (std::size_t i = 0; i < recs.size(); ++i) {
			recs[i] = {static_cast<std::uint32_t>(uniform_index(rng, 240 * 180)),
			           static_cast<std::int16_t>(uniform_index(rng, 200)), static_cast<std::uint16_t>(i * 10)};
		}
		frame = aer::safe_encode(recs, 0, 0);
	}
	std::cout << aer::hex_dump_safe(frame);
	const auto decoded = aer::safe_decode(frame);
	std::cout << "decode: " << (decoded.ok() ? "ok" : to_string(decoded.error)) << '\n';
	return decoded.ok() ? 0 : 1;
}

struct PowerOpts {
	double cluster_kw = 6.5;
	std::vector<double> board_w;
	int boards = 10;
	std::optional<double> simulated_s;
	std::optional<double> wall_s;
};

int cmd_power(const PowerOpts &o)
{
	const std::vector<double> boards = o.board_w.empty() ? std::vector<double>{120.0, 48.0} : o.board_w;
	for (double w : boards) {
		std::printf("cluster %.3f kW vs %d boards x %.1f W: ratio %.2f\n", o.cluster_kw, o.boards, w,
		            power_ratio(o.cluster_kw, w, o.boards));
	}
	if (o.simulated_s || o.wall_s) {
		if (!o.simulated_s || !o.wall_s) {
			throw ConfigError("--simulated-s and --wall-s go together");
		}
		std::cout << format_rtf(metrics_report(*o.simulated_s, *o.wall_s)) << '\n';
	}
	return 0;
}

int cmd_report(const std::string &in, bool kv_only)
{
	const std::string text = slurp(in);
	const auto kv = parse_report(text);
	if (!kv_only) {
		std::cout << render_report(kv) << '\n';
	}
	for (const auto &[k, v] : kv) {
		std::cout << k << '=' << v << '\n';
	}
	return 0;
}

}  // namespace

int main(int argc, char **argv)
{
	CLI::App app{"neuroshow: event-camera theremin show simulator"};
	app.require_subcommand(1);

	SynthOpts synth;
	auto *sub_synth = app.add_subcommand("synth", "render a hand trajectory into an EVT1 event file");
	sub_synth->add_option("--trajectory", synth.trajectory, "trajectory text file (default: two waving hands)");
	sub_synth->add_option("-o,--out", synth.out, "output EVT1 file")->required();
	sub_synth->add_option("--seed", synth.seed, "random seed")->required();
	sub_synth->add_option("--resolution", synth.resolution, "WxH")->capture_default_str();
	sub_synth->add_option("--radius", synth.radius, "hand blob radius, px")->capture_default_str();
	sub_synth->add_option("--threshold", synth.threshold, "contrast threshold")->capture_default_str();
	sub_synth->add_option("--distractors", synth.distractors, "noise events as a fraction of signal")
	    ->capture_default_str();
	sub_synth->add_option("--duration", synth.duration_s, "seconds of built-in waving")->capture_default_str();

	TrackOpts track;
	auto *sub_track = app.add_subcommand("track", "track hands in an EVT1 file");
	sub_track->add_option("-i,--in", track.in, "input EVT1 file")->required();
	sub_track->add_option("-o,--out", track.out, "estimates CSV (default stdout)");
	sub_track->add_option("--overlay-dir", track.overlay_dir, "write PGM overlays here");
	sub_track->add_option("--overlay-every", track.overlay_every, "windows between overlays")
	    ->capture_default_str();
	sub_track->add_option("--detector", track.detector, "blob or sd_net")->capture_default_str();
	sub_track->add_option("--weights", track.weights, "dense network text file for sd_net");
	sub_track->add_option("--window-us", track.window_us, "accumulation window")->capture_default_str();

	ShowOpts show;
	auto *sub_show = app.add_subcommand("show", "run a scenario on the virtual clock");
	sub_show->add_option("--config", show.config, "JSON simulation config");
	sub_show->add_option("--seed", show.seed, "random seed")->required();
	sub_show->add_option("--scenario", show.scenario, "scenario script");
	sub_show->add_option("--score", show.score, "score file");
	sub_show->add_option("--report", show.report, "write key=value report here");
	sub_show->add_option("--wav", show.wav, "render the synthesizer trace to WAV");
	sub_show->add_option("--sample-rate", show.sample_rate, "WAV sample rate")->capture_default_str();
	sub_show->add_option("--vibrato-cents", show.vibrato_cents, "vibrato depth")->capture_default_str();
	sub_show->add_option("--vibrato-hz", show.vibrato_hz, "vibrato rate")->capture_default_str();
	auto *thr = sub_show->add_flag("--threaded", show.threaded, "one thread per pipeline stage");
	sub_show->add_flag("--single-threaded", show.single_threaded, "run all stages inline")->excludes(thr);

	ProtoOpts proto;
	auto *sub_proto = app.add_subcommand("proto", "AER link tools");
	sub_proto->require_subcommand(1);
	auto *bench = sub_proto->add_subcommand("bench", "bytes per event for RAW and SAFE");
	bench->add_option("--loss", proto.channel.loss_p, "frame loss probability");
	bench->add_option("--bitflip", proto.channel.bitflip_p, "per-byte corruption probability");
	bench->add_option("--delay-us", proto.channel.delay_base_us, "base delay");
	bench->add_option("--jitter-us", proto.channel.delay_jitter_us, "delay jitter");
	bench->add_option("--reorder", proto.channel.reorder_window, "reorder window");
	bench->add_option("--events", proto.events, "events per batch size")->capture_default_str();
	bench->add_option("--seed", proto.seed, "channel seed")->capture_default_str();
	auto *fuzz = sub_proto->add_subcommand("fuzz", "exhaustive single-bit-flip fuzz of one frame");
	fuzz->add_option("--records", proto.records, "records in the frame")->capture_default_str();
	fuzz->add_option("--seed", proto.seed, "content seed")->capture_default_str();
	auto *hex = sub_proto->add_subcommand("hexdump", "annotated dump of a SAFE frame");
	hex->add_option("-i,--in", proto.in, "frame file (default: a generated frame)");
	hex->add_option("--records", proto.records, "records in the generated frame")->capture_default_str();
	hex->add_option("--seed", proto.seed, "content seed")->capture_default_str();

	PowerOpts power;
	auto *sub_power = app.add_subcommand("power", "cluster-to-board power ratio and real-time factor");
	sub_power->add_option("--cluster-kw", power.cluster_kw)->capture_default_str();
	sub_power->add_option("--board-w", power.board_w, "board wattage (repeatable)");
	sub_power->add_option("--boards", power.boards)->capture_default_str();
	sub_power->add_option("--simulated-s", power.simulated_s, "simulated seconds");
	sub_power->add_option("--wall-s", power.wall_s, "wall-clock seconds");

	std::string report_in;
	bool kv_only = false;
	auto *sub_report = app.add_subcommand("report", "render a key=value run report");
	sub_report->add_option("-i,--in", report_in, "report file")->required();
	sub_report->add_flag("--kv", kv_only, "machine-readable lines only");

	CLI11_PARSE(app, argc, argv);

	try {
		if (*sub_synth) {
			return cmd_synth(synth);
		}
		if (*sub_track) {
			return cmd_track(track);
		}
		if (*sub_show) {
			return cmd_show(show);
		}
		if (*bench) {
			return cmd_proto_bench(proto);
		}
		if (*fuzz) {
			return cmd_proto_fuzz(proto);
		}
		if (*hex) {
			return cmd_proto_hexdump(proto);
		}
		if (*sub_power) {
			return cmd_power(power);
		}
		if (*sub_report) {
			return cmd_report(report_in, kv_only);
		}
	} catch (const std::exception &e) {
		std::cerr << "error: " << e.what() << '\n';
		return 2;
	}
	return 1;
}
