#include <neuroshow/harness.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <numbers>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace neuroshow {

namespace {

using nlohmann::json;

std::uint64_t splitmix64(std::uint64_t x)
{
	x += 0x9E3779B97F4A7C15ull;
	x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
	x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
	return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
{
	return splitmix64(seed ^ splitmix64(stream));
}

std::string read_text(const std::string &path)
{
	Bytes bytes = read_file_bytes(path);
	return {bytes.begin(), bytes.end()};
}

// ---------------------------------------------------------------------------
// Config loading

void check_keys(const json &obj, const std::string &where,
                std::initializer_list<const char *> allowed)
{
	if (!obj.is_object()) {
		throw ConfigError(where + ": expected an object");
	}
	for (const auto &item : obj.items()) {
		bool known = false;
		for (const char *k : allowed) {
			known = known || item.key() == k;
		}
		if (!known) {
			throw ConfigError(where + ": unknown key '" + item.key() + "'");
		}
	}
}

template <typename T>
void read(const json &obj, const char *key, T &out)
{
	if (auto it = obj.find(key); it != obj.end()) {
		out = it->get<T>();
	}
}

void read_calibration(const json &obj, const std::string &where, PitchCalibration &cal)
{
	check_keys(obj, where, {"d_ref", "f_ref", "octave_dist"});
	read(obj, "d_ref", cal.d_ref);
	read(obj, "f_ref", cal.f_ref);
	read(obj, "octave_dist", cal.octave_dist);
}

// ---------------------------------------------------------------------------
// Hand estimates on the SAFE link: three records per hand, address
// label * 4 + field with field 0 = x, 1 = y (1/16 px), 2 = confidence (1/30000).

constexpr double kCoordScale = 16.0;
constexpr double kConfidenceScale = 30000.0;

std::vector<aer::SafeRecord> encode_estimate(const HandEstimate &est)
{
	std::vector<aer::SafeRecord> records;
	for (const HandPosition &h : est.hands) {
		const auto base = static_cast<std::uint32_t>(h.label) * 4;
		auto q = [](double v, double scale) {
			return static_cast<std::int16_t>(
			    std::clamp(std::lround(v * scale), -32768L, 32767L));
		};
		records.push_back({base + 0, q(h.x, kCoordScale), 0});
		records.push_back({base + 1, q(h.y, kCoordScale), 0});
		records.push_back({base + 2, q(h.confidence, kConfidenceScale), 0});
	}
	return records;
}

HandEstimate decode_estimate(const aer::SafeFrame &frame)
{
	HandEstimate est;
	est.t = frame.timestamp;
	for (const aer::SafeRecord &r : frame.records) {
		const auto label = static_cast<HandLabel>(r.address / 4);
		if (r.address / 4 > 1 || r.address % 4 > 2) {
			throw StructuralError("unexpected hand record address " + std::to_string(r.address));
		}
		auto it = std::find_if(est.hands.begin(), est.hands.end(),
		                       [&](const HandPosition &h) { return h.label == label; });
		if (it == est.hands.end()) {
			est.hands.push_back({label, 0.0, 0.0, 0.0});
			it = est.hands.end() - 1;
		}
		switch (r.address % 4) {
		case 0: it->x = r.value / kCoordScale; break;
		case 1: it->y = r.value / kCoordScale; break;
		default: it->confidence = r.value / kConfidenceScale; break;
		}
	}
	return est;
}

// ---------------------------------------------------------------------------
// Pipeline stages for one tracked performance segment

struct EdgeItem {
	std::uint32_t seq = 0;
	std::uint64_t window_end = 0;  ///< show time
	std::uint64_t tracker_us = 0;
	std::uint64_t send_time = 0;
	Bytes frame;
};

struct RxItem {
	EdgeItem meta;
	aer::SafeFrame frame;
	std::uint64_t rx_time = 0;
};

struct Segment {
	ShowState state = ShowState::Idle;
	std::uint64_t start_us = 0;
	std::uint64_t length_us = 0;
	std::size_t index = 0;
};

struct SharedLink {
	aer::SafeSender sender;
	aer::Channel channel;
	aer::SafeReceiver receiver;
};

class EdgeStage {
public:
	EdgeStage(const SimConfig &cfg, const Segment &seg, const EventStream &events,
	          aer::SafeSender &sender)
	    : m_cfg(cfg), m_seg(seg), m_events(events), m_sender(sender),
	      m_tracker(cfg.tracker)
	{
	}

	void run(const std::function<void(EdgeItem)> &sink)
	{
		const std::uint64_t w = m_cfg.tracker.window_us;
		const LatencyModel &lat = m_cfg.latency;
		for (std::uint64_t t0 = 0; t0 + w <= m_seg.length_us; t0 += w) {
			const std::uint64_t before = m_tracker.events_seen();
			HandEstimate est = m_tracker.step(m_events, t0);
			const std::uint64_t n = m_tracker.events_seen() - before;
			m_events_total += n;
			++m_windows;

			EdgeItem item;
			item.window_end = m_seg.start_us + est.t;
			item.tracker_us = lat.tracker_base_us +
			                  static_cast<std::uint64_t>(std::llround(
			                      static_cast<double>(n) * lat.tracker_per_event_ns / 1000.0));
			item.send_time = item.window_end + lat.sensor_us + item.tracker_us;
			item.seq = m_sender.next_seq();
			auto records = encode_estimate(est);
			item.frame = m_sender.send(records, item.window_end);
			sink(std::move(item));
		}
	}

	std::uint64_t windows() const { return m_windows; }
	std::uint64_t events() const { return m_events_total; }
	std::vector<std::uint64_t> spike_counts() const { return m_tracker.detector().spike_counts(); }

private:
	const SimConfig &m_cfg;
	const Segment &m_seg;
	const EventStream &m_events;
	aer::SafeSender &m_sender;
	Tracker m_tracker;
	std::uint64_t m_windows = 0;
	std::uint64_t m_events_total = 0;
};

class LinkStage {
public:
	explicit LinkStage(SharedLink &link) : m_link(link) {}

	void on_item(EdgeItem item, const std::function<void(RxItem)> &sink)
	{
		m_end_seq = item.seq + 1;
		m_any = true;
		const std::uint64_t send = item.send_time;
		Bytes frame = item.frame;
		m_meta.emplace(item.seq, std::move(item));
		m_link.channel.push(std::move(frame), send);
		deliver(m_link.channel.poll(), sink);
	}

	void finish(const std::function<void(RxItem)> &sink)
	{
		deliver(m_link.channel.flush(), sink);
		if (m_any) {
			m_link.receiver.finish(m_end_seq);
			collect(sink);
		}
	}

private:
	void deliver(std::vector<aer::Delivery> deliveries, const std::function<void(RxItem)> &sink)
	{
		for (aer::Delivery &d : deliveries) {
			m_link.receiver.ingest(d.bytes);
			m_last_rx = std::max(m_last_rx, d.deliver_time);
			collect(sink);
		}
	}

	void collect(const std::function<void(RxItem)> &sink)
	{
		for (aer::SafeFrame &f : m_link.receiver.take_frames()) {
			auto it = m_meta.find(f.seq);
			if (it == m_meta.end()) {
				throw StructuralError("received frame with unknown sequence number");
			}
			RxItem rx{it->second, std::move(f), std::max(m_last_rx, it->second.send_time)};
			m_meta.erase(it);
			sink(std::move(rx));
		}
	}

	SharedLink &m_link;
	std::map<std::uint32_t, EdgeItem> m_meta;
	std::uint32_t m_end_seq = 0;
	bool m_any = false;
	std::uint64_t m_last_rx = 0;
};

class OrchestratorStage {
public:
	OrchestratorStage(const SimConfig &cfg, const Segment &seg, const PitchCalibration &belief,
	                  const Trajectory &metric, const Trajectory &pixels, RunReport &report)
	    : m_cfg(cfg), m_seg(seg), m_belief(belief), m_metric(metric), m_pixels(pixels),
	      m_report(report), m_signals(control_signals(seg.state)),
	      m_routes(RoutingTable::standard())
	{
		m_routes.derive(m_signals);
	}

	void on_rx(const RxItem &rx)
	{
		const HandEstimate est = decode_estimate(rx.frame);
		const std::string payload = format_estimate(est);
		const std::vector<Message> inbox{{"tracker->theremin_synth", payload},
		                                 {"tracker->gui_duet", payload}};
		const RoutingResult routed = route_messages(m_signals, m_routes, inbox);
		m_report.messages_delivered += routed.delivered.size();
		m_report.messages_dropped += routed.dropped;
		const bool to_synth = std::any_of(routed.delivered.begin(), routed.delivered.end(),
		                                  [](const Message &m) {
			                                  return m.route == "tracker->theremin_synth";
		                                  });

		const LatencyModel &lat = m_cfg.latency;
		const std::uint64_t link_us = rx.rx_time - rx.meta.send_time;
		const std::uint64_t synth_us = to_synth ? lat.synth_us : 0;
		const std::uint64_t done = rx.rx_time + lat.orchestrator_us + synth_us;
		const std::uint64_t e2e = done - rx.meta.window_end;
		const std::uint64_t parts =
		    lat.sensor_us + rx.meta.tracker_us + link_us + lat.orchestrator_us + synth_us;
		StageLatency &s = m_report.latency;
		s.sensor.add(static_cast<double>(lat.sensor_us));
		s.tracker.add(static_cast<double>(rx.meta.tracker_us));
		s.link.add(static_cast<double>(link_us));
		s.orchestrator.add(static_cast<double>(lat.orchestrator_us));
		s.synth.add(static_cast<double>(synth_us));
		s.end_to_end.add(static_cast<double>(e2e));
		s.closure_max_abs_us =
		    std::max(s.closure_max_abs_us, e2e > parts ? e2e - parts : parts - e2e);

		if (!to_synth) {
			return;
		}
		const HandPosition *pitch = est.find(HandLabel::Pitch);
		if (pitch == nullptr) {
			++m_report.duet_windows_without_pitch;
			return;
		}
		ControlPoint cp = hands_to_control(est, m_belief, m_cfg.volume, m_cfg.geometry);
		m_report.control_trace.push_back(cp);

		const std::uint64_t local = est.t - m_seg.start_us;
		const auto truth_m = m_metric.position_at(HandId::Right, local);
		const auto truth_px = m_pixels.position_at(HandId::Right, local);
		if (!truth_m || !truth_px) {
			return;
		}
		const double f_true = pitch_from_distance(truth_m->x(), m_cfg.instrument);
		m_report.duet_cents.add(std::abs(cents_between(cp.freq, f_true)));
		m_report.duet_tracking_px.add((Eigen::Vector2d(pitch->x, pitch->y) - *truth_px).norm());
	}

private:
	const SimConfig &m_cfg;
	const Segment &m_seg;
	const PitchCalibration &m_belief;
	const Trajectory &m_metric;
	const Trajectory &m_pixels;
	RunReport &m_report;
	ControlSignals m_signals;
	RoutingTable m_routes;
};

template <typename Fn>
void run_stage(const char *name, Fn &&fn)
{
	try {
		fn();
	} catch (const ConfigError &) {
		throw;
	} catch (const std::exception &e) {
		throw StructuralError(std::string("stage ") + name + ": " + e.what());
	}
}

void run_tracked_segment(const SimConfig &cfg, const Segment &seg, const Score &score,
                         const PitchCalibration &belief, std::uint64_t seed,
                         SharedLink &link, RunReport &report)
{
	const Trajectory metric =
	    score_to_trajectory(score, cfg.instrument, cfg.volume, cfg.trajectory);
	const Trajectory pixels = performer_trajectory(score, cfg);
	EventStream events;
	run_stage("sensor", [&] {
		events = synth_hand_events(pixels, cfg.synth, cfg.tracker.input_res,
		                           derive_seed(seed, seg.index));
	});

	EdgeStage edge(cfg, seg, events, link.sender);
	LinkStage wire(link);
	OrchestratorStage orch(cfg, seg, belief, metric, pixels, report);

	if (!cfg.threaded) {
		auto to_orch = [&](RxItem rx) { run_stage("orchestrator", [&] { orch.on_rx(rx); }); };
		auto to_link = [&](EdgeItem item) {
			run_stage("link", [&] { wire.on_item(std::move(item), to_orch); });
		};
		run_stage("tracker", [&] { edge.run(to_link); });
		run_stage("link", [&] { wire.finish(to_orch); });
	} else {
		BoundedChannel<EdgeItem> a2b(cfg.channel_capacity);
		BoundedChannel<RxItem> b2c(cfg.channel_capacity);
		std::exception_ptr errors[3];
		std::thread ta([&] {
			try {
				run_stage("tracker", [&] { edge.run([&](EdgeItem it) { a2b.push(std::move(it)); }); });
			} catch (...) {
				errors[0] = std::current_exception();
			}
			a2b.close();
		});
		std::thread tb([&] {
			try {
				auto sink = [&](RxItem rx) { b2c.push(std::move(rx)); };
				while (auto it = a2b.pop()) {
					run_stage("link", [&] { wire.on_item(std::move(*it), sink); });
				}
				run_stage("link", [&] { wire.finish(sink); });
			} catch (...) {
				errors[1] = std::current_exception();
				a2b.close();
			}
			b2c.close();
		});
		std::thread tc([&] {
			try {
				while (auto rx = b2c.pop()) {
					run_stage("orchestrator", [&] { orch.on_rx(*rx); });
				}
			} catch (...) {
				errors[2] = std::current_exception();
				b2c.close();
				a2b.close();
			}
		});
		ta.join();
		tb.join();
		tc.join();
		for (auto &e : errors) {
			if (e) {
				std::rethrow_exception(e);
			}
		}
	}

	report.windows += edge.windows();
	report.events += edge.events();
	auto spikes = edge.spike_counts();
	if (report.spike_counts.size() < spikes.size()) {
		report.spike_counts.resize(spikes.size(), 0);
	}
	for (std::size_t i = 0; i < spikes.size(); ++i) {
		report.spike_counts[i] += spikes[i];
	}
}

void run_solo_segment(const SimConfig &cfg, const Segment &seg, const Score &score,
                      const PitchCalibration &belief, RunReport &report)
{
	const Trajectory traj = score_to_trajectory(score, belief, cfg.volume, cfg.trajectory);
	// The controller places its hand by its belief; the instrument sounds by its own law.
	const auto controls = trajectory_to_controls(traj, cfg.instrument, cfg.volume,
	                                             cfg.control_step_us);
	const auto onsets = note_onsets(score, cfg.trajectory.tempo);
	std::size_t note = 0;
	for (ControlPoint cp : controls) {
		if (cp.t > seg.length_us) {
			break;
		}
		while (note + 1 < score.notes.size() && cp.t >= onsets[note + 1]) {
			++note;
		}
		const bool in_ramp =
		    cp.t < onsets[note] + note_ramp_us(score, note, cfg.trajectory);
		if (!in_ramp && cp.t < onsets.back()) {
			report.solo_cents.add(
			    std::abs(cents_between(cp.freq, note_freq(score.notes[note].midi))));
		}
		cp.t += seg.start_us;
		report.control_trace.push_back(cp);
	}
}

PitchCalibration run_calibration(const SimConfig &cfg, const PitchCalibration &belief,
                                 std::uint64_t seed, RunReport &report)
{
	Rng rng(seed);
	std::vector<CalibrationSample> samples;
	const int n = cfg.calibration_points;
	for (int i = 0; i < n; ++i) {
		const double d = 0.12 + 0.36 * i / (n - 1);
		double f = pitch_from_distance(d, cfg.instrument);
		if (cfg.calibration_noise_cents > 0.0) {
			// Box-Muller on the explicit uniform helper keeps draws portable.
			const double u1 = 1.0 - unit_uniform(rng);
			const double u2 = unit_uniform(rng);
			const double z = std::sqrt(-2.0 * std::log(u1)) *
			                 std::cos(2.0 * std::numbers::pi * u2);
			f *= std::exp2(cfg.calibration_noise_cents * z / 1200.0);
		}
		samples.push_back({d, f});
	}
	PitchCalibration fitted = calibrate_pitch(samples, belief.f_ref);
	report.fitted = fitted;
	report.calibration_residual = calibration_residual(samples, fitted);
	return fitted;
}

std::string fmt(double v, int digits = 6)
{
	char buf[64];
	std::snprintf(buf, sizeof buf, "%.*f", digits, v);
	return buf;
}

void add_link(aer::LinkStats &acc, const aer::LinkStats &s)
{
	acc.sent += s.sent;
	acc.delivered += s.delivered;
	acc.lost += s.lost;
	acc.corrupted_dropped += s.corrupted_dropped;
	acc.duplicate_dropped += s.duplicate_dropped;
	acc.late_dropped += s.late_dropped;
	acc.reordered += s.reordered;
	acc.bytes_sent += s.bytes_sent;
	acc.events_sent += s.events_sent;
}

}  // namespace

void EnergyConstants::validate() const
{
	if (!(edge_tracker_w > 0.0) || !(gpu_w_min > 0.0) || !(gpu_w_max >= gpu_w_min) ||
	    !(cluster_kw > 0.0) || !(board_w_min > 0.0) || !(board_w_max >= board_w_min) ||
	    boards <= 0) {
		throw ConfigError("energy constants must be positive with min <= max");
	}
}

void SimConfig::validate() const
{
	if (!seed) {
		throw ConfigError("a seed is required");
	}
	tracker.validate();
	channel.validate(aer::Profile::Safe);
	instrument.validate();
	calibration.validate();
	volume.validate();
	geometry.validate();
	energy.validate();
	if (calibration_points < 2 || control_step_us == 0 || !(tremble_px >= 0.0) ||
	    !(tremble_hz >= 0.0) || !(calibration_noise_cents >= 0.0)) {
		throw ConfigError("simulation parameters out of range");
	}
}

SimConfig load_sim_config(const std::string &json_text)
{
	json j;
	try {
		j = json::parse(json_text);
	} catch (const json::parse_error &e) {
		throw ConfigError(std::string("config: ") + e.what());
	}
	SimConfig cfg;
	try {
		check_keys(j, "config",
		           {"scenario", "score", "seed", "threaded", "channel_capacity", "tracker",
		            "channel", "instrument", "calibration", "volume", "geometry", "trajectory",
		            "performer", "calibration_sweep", "control_step_us", "latency", "energy"});
		read(j, "scenario", cfg.scenario_path);
		read(j, "score", cfg.score_path);
		if (j.contains("seed")) {
			cfg.seed = j["seed"].get<std::uint64_t>();
		}
		read(j, "threaded", cfg.threaded);
		read(j, "channel_capacity", cfg.channel_capacity);
		read(j, "control_step_us", cfg.control_step_us);
		if (auto it = j.find("tracker"); it != j.end()) {
			check_keys(*it, "tracker",
			           {"window_us", "detector", "blob_sigma", "density_half", "sd_threshold",
			            "input_gain", "field_substeps", "min_separation", "min_peak_mass",
			            "mirror"});
			TrackerConfig &t = cfg.tracker;
			read(*it, "window_us", t.window_us);
			read(*it, "blob_sigma", t.blob_sigma);
			read(*it, "density_half", t.density_half);
			read(*it, "sd_threshold", t.sd_threshold);
			read(*it, "input_gain", t.input_gain);
			read(*it, "field_substeps", t.field_substeps);
			read(*it, "min_separation", t.min_separation);
			read(*it, "min_peak_mass", t.min_peak_mass);
			read(*it, "mirror", t.mirror);
			if (it->contains("detector")) {
				const auto kind = (*it)["detector"].get<std::string>();
				if (kind == "blob") {
					t.detector = DetectorKind::Blob;
				} else if (kind == "sd_net") {
					t.detector = DetectorKind::SdNet;
				} else {
					throw ConfigError("tracker.detector must be 'blob' or 'sd_net'");
				}
			}
		}
		if (auto it = j.find("channel"); it != j.end()) {
			check_keys(*it, "channel",
			           {"loss_p", "bitflip_p", "delay_base_us", "delay_jitter_us",
			            "reorder_window", "receiver_window"});
			read(*it, "loss_p", cfg.channel.loss_p);
			read(*it, "bitflip_p", cfg.channel.bitflip_p);
			read(*it, "delay_base_us", cfg.channel.delay_base_us);
			read(*it, "delay_jitter_us", cfg.channel.delay_jitter_us);
			read(*it, "reorder_window", cfg.channel.reorder_window);
			read(*it, "receiver_window", cfg.receiver_window);
		}
		if (auto it = j.find("instrument"); it != j.end()) {
			read_calibration(*it, "instrument", cfg.instrument);
		}
		if (auto it = j.find("calibration"); it != j.end()) {
			read_calibration(*it, "calibration", cfg.calibration);
		}
		if (auto it = j.find("volume"); it != j.end()) {
			check_keys(*it, "volume", {"h_min", "h_max"});
			read(*it, "h_min", cfg.volume.h_min);
			read(*it, "h_max", cfg.volume.h_max);
		}
		if (auto it = j.find("geometry"); it != j.end()) {
			check_keys(*it, "geometry",
			           {"pixel_to_meter", "pitch_antenna_x", "volume_antenna_y",
			            "pitch_hand_y", "volume_hand_x"});
			AntennaGeometry &g = cfg.geometry;
			read(*it, "pixel_to_meter", g.pixel_to_meter);
			read(*it, "pitch_antenna_x", g.pitch_antenna_x);
			read(*it, "volume_antenna_y", g.volume_antenna_y);
			read(*it, "pitch_hand_y", g.pitch_hand_y);
			read(*it, "volume_hand_x", g.volume_hand_x);
		}
		if (auto it = j.find("trajectory"); it != j.end()) {
			check_keys(*it, "trajectory", {"tempo", "ramp_ms"});
			read(*it, "tempo", cfg.trajectory.tempo);
			read(*it, "ramp_ms", cfg.trajectory.ramp_ms);
		}
		if (auto it = j.find("performer"); it != j.end()) {
			check_keys(*it, "performer",
			           {"blob_radius", "contrast_threshold", "rate_scale", "tremble_px",
			            "tremble_hz"});
			read(*it, "blob_radius", cfg.synth.blob_radius);
			read(*it, "contrast_threshold", cfg.synth.contrast_threshold);
			read(*it, "rate_scale", cfg.synth.rate_scale);
			read(*it, "tremble_px", cfg.tremble_px);
			read(*it, "tremble_hz", cfg.tremble_hz);
		}
		if (auto it = j.find("calibration_sweep"); it != j.end()) {
			check_keys(*it, "calibration_sweep", {"points", "noise_cents"});
			read(*it, "points", cfg.calibration_points);
			read(*it, "noise_cents", cfg.calibration_noise_cents);
		}
		if (auto it = j.find("latency"); it != j.end()) {
			check_keys(*it, "latency",
			           {"sensor_us", "tracker_base_us", "tracker_per_event_ns",
			            "orchestrator_us", "synth_us"});
			LatencyModel &l = cfg.latency;
			read(*it, "sensor_us", l.sensor_us);
			read(*it, "tracker_base_us", l.tracker_base_us);
			read(*it, "tracker_per_event_ns", l.tracker_per_event_ns);
			read(*it, "orchestrator_us", l.orchestrator_us);
			read(*it, "synth_us", l.synth_us);
		}
		if (auto it = j.find("energy"); it != j.end()) {
			check_keys(*it, "energy",
			           {"edge_tracker_w", "gpu_w_min", "gpu_w_max", "cluster_kw",
			            "board_w_min", "board_w_max", "boards"});
			EnergyConstants &e = cfg.energy;
			read(*it, "edge_tracker_w", e.edge_tracker_w);
			read(*it, "gpu_w_min", e.gpu_w_min);
			read(*it, "gpu_w_max", e.gpu_w_max);
			read(*it, "cluster_kw", e.cluster_kw);
			read(*it, "board_w_min", e.board_w_min);
			read(*it, "board_w_max", e.board_w_max);
			read(*it, "boards", e.boards);
		}
	} catch (const json::exception &e) {
		throw ConfigError(std::string("config: ") + e.what());
	}
	return cfg;
}

std::vector<ScenarioStep> demo_scenario()
{
	return {{0, Intention::StartConversation},  {500, Intention::RequestCalibration},
	        {1000, Intention::Done},            {1500, Intention::AskSolo},
	        {5500, Intention::Done},            {6000, Intention::AskDuet},
	        {10000, Intention::Done},           {10500, Intention::AskTeaching},
	        {11500, Intention::Done}};
}

Trajectory performer_trajectory(const Score &score, const SimConfig &cfg, std::uint64_t step_us)
{
	if (step_us == 0) {
		throw ConfigError("sample step must be positive");
	}
	const Trajectory metric =
	    score_to_trajectory(score, cfg.instrument, cfg.volume, cfg.trajectory);
	const Trajectory px = trajectory_to_pixels(metric, cfg.geometry);
	Trajectory out;
	out.unit = LengthUnit::Pixels;
	auto span = px.span();
	if (!span) {
		return out;
	}
	const double w = 2.0 * std::numbers::pi * cfg.tremble_hz;
	for (std::uint64_t t = span->first;; t = std::min(t + step_us, span->second)) {
		const double ts = static_cast<double>(t) * 1e-6;
		if (auto p = px.position_at(HandId::Right, t)) {
			out.samples.push_back(
			    {t, HandId::Right, p->x(), p->y() + cfg.tremble_px * std::sin(w * ts)});
		}
		if (auto p = px.position_at(HandId::Left, t)) {
			out.samples.push_back(
			    {t, HandId::Left, p->x() + cfg.tremble_px * std::cos(w * ts), p->y()});
		}
		if (t == span->second) {
			break;
		}
	}
	return out;
}

RunReport run_show(const SimConfig &cfg)
{
	std::vector<ScenarioStep> steps =
	    cfg.scenario_path.empty() ? demo_scenario() : parse_scenario(read_text(cfg.scenario_path));
	Score score = cfg.score_path.empty() ? showcase_scale() : parse_score(read_text(cfg.score_path));
	return run_show(cfg, steps, score);
}

RunReport run_show(const SimConfig &cfg, const std::vector<ScenarioStep> &steps,
                   const Score &score)
{
	cfg.validate();
	score.validate();
	const auto wall_start = std::chrono::steady_clock::now();
	const std::uint64_t seed = *cfg.seed;

	RunReport report;
	report.seed = seed;
	report.trace = replay(steps);
	report.cents_per_pixel = 1200.0 * cfg.geometry.pixel_to_meter / cfg.calibration.octave_dist;

	// Consecutive steps in the same state form one segment.
	std::vector<Segment> segments;
	const std::uint64_t score_us = score.duration_us(cfg.trajectory.tempo);
	for (std::size_t i = 0; i < report.trace.size(); ++i) {
		const TraceEntry &e = report.trace[i];
		const std::uint64_t start = e.t_ms * 1000;
		if (!segments.empty() && segments.back().state == e.state.state) {
			continue;
		}
		segments.push_back({e.state.state, start, 0, segments.size()});
	}
	for (std::size_t i = 0; i < segments.size(); ++i) {
		Segment &s = segments[i];
		const bool performing = s.state == ShowState::Solo || s.state == ShowState::Duet ||
		                        s.state == ShowState::Teaching;
		const std::uint64_t available =
		    i + 1 < segments.size() ? segments[i + 1].start_us - s.start_us : score_us;
		s.length_us = performing ? std::min(available, score_us) : available;
		report.sim_time_us = std::max(report.sim_time_us, s.start_us + s.length_us);
	}
	if (!report.trace.empty()) {
		report.sim_time_us = std::max(report.sim_time_us, report.trace.back().t_ms * 1000);
	}

	aer::ChannelConfig channel = cfg.channel;
	channel.seed = derive_seed(seed, 0xC4A77E1ull);
	SharedLink link{aer::SafeSender(0), aer::Channel(channel, aer::Profile::Safe),
	                aer::SafeReceiver(cfg.receiver_window, 0)};

	PitchCalibration belief = cfg.calibration;
	for (const Segment &seg : segments) {
		switch (seg.state) {
		case ShowState::Calibrating:
			belief = run_calibration(cfg, belief, derive_seed(seed, 0xCA1B00 + seg.index), report);
			break;
		case ShowState::Solo:
			run_solo_segment(cfg, seg, score, belief, report);
			break;
		case ShowState::Duet:
		case ShowState::Teaching:
			run_tracked_segment(cfg, seg, score, belief, seed, link, report);
			break;
		case ShowState::Idle:
		case ShowState::Conversing:
			break;
		}
	}
	report.link = aer::combine(link.sender.stats(), link.receiver.stats());
	report.duet_bound_cents = report.cents_per_pixel * report.duet_tracking_px.mean() + 1.0;

	const EnergyConstants &en = cfg.energy;
	report.tracker_active_s = static_cast<double>(report.windows) *
	                          static_cast<double>(cfg.tracker.window_us) * 1e-6;
	report.edge_energy_j = en.edge_tracker_w * report.tracker_active_s;
	report.gpu_energy_j_min = en.gpu_w_min * report.tracker_active_s;
	report.gpu_energy_j_max = en.gpu_w_max * report.tracker_active_s;
	report.power_ratio_min = power_ratio(en.cluster_kw, en.board_w_max, en.boards);
	report.power_ratio_max = power_ratio(en.cluster_kw, en.board_w_min, en.boards);

	report.wall_time_s =
	    std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
	return report;
}

std::string format_report(const RunReport &r, bool include_wall_clock)
{
	std::string out;
	auto kv = [&](const std::string &k, const std::string &v) { out += k + '=' + v + '\n'; };
	auto u = [](std::uint64_t v) { return std::to_string(v); };
	auto stat = [&](const std::string &prefix, const RunningStat &s, const char *unit) {
		kv(prefix + ".count", u(s.count));
		kv(prefix + ".mean_" + unit, fmt(s.mean()));
		kv(prefix + ".max_" + unit, fmt(s.max));
	};

	kv("seed", u(r.seed));
	kv("sim_time_us", u(r.sim_time_us));
	std::string states;
	for (const TraceEntry &e : r.trace) {
		states += (states.empty() ? "" : ",") + std::to_string(e.t_ms) + ':' + to_string(e.state.state);
	}
	kv("fsm.trace", states);
	kv("fsm.final_state", to_string(r.trace.empty() ? ShowState::Idle : r.trace.back().state.state));
	kv("fsm.final_gates",
	   format_signals(r.trace.empty() ? control_signals(ShowState::Idle) : r.trace.back().signals));

	kv("tracker.windows", u(r.windows));
	kv("tracker.events", u(r.events));
	std::string spikes;
	std::uint64_t spike_total = 0;
	for (std::uint64_t c : r.spike_counts) {
		spikes += (spikes.empty() ? "" : ",") + u(c);
		spike_total += c;
	}
	kv("tracker.spikes_per_layer", spikes.empty() ? "none" : spikes);
	kv("tracker.spikes_total", u(spike_total));
	kv("routing.delivered", u(r.messages_delivered));
	kv("routing.dropped", u(r.messages_dropped));

	kv("link.sent", u(r.link.sent));
	kv("link.delivered", u(r.link.delivered));
	kv("link.lost", u(r.link.lost));
	kv("link.corrupted_dropped", u(r.link.corrupted_dropped));
	kv("link.duplicate_dropped", u(r.link.duplicate_dropped));
	kv("link.late_dropped", u(r.link.late_dropped));
	kv("link.reordered", u(r.link.reordered));
	kv("link.bytes_sent", u(r.link.bytes_sent));
	kv("link.events_sent", u(r.link.events_sent));
	kv("link.bytes_per_event", fmt(r.link.overhead(), 4));

	stat("latency.sensor", r.latency.sensor, "us");
	stat("latency.tracker", r.latency.tracker, "us");
	stat("latency.link", r.latency.link, "us");
	stat("latency.orchestrator", r.latency.orchestrator, "us");
	stat("latency.synth", r.latency.synth, "us");
	stat("latency.end_to_end", r.latency.end_to_end, "us");
	kv("latency.closure_max_abs_us", u(r.latency.closure_max_abs_us));

	stat("pitch.solo", r.solo_cents, "cents");
	stat("pitch.duet", r.duet_cents, "cents");
	stat("tracking.duet", r.duet_tracking_px, "px");
	kv("pitch.duet.cents_per_pixel", fmt(r.cents_per_pixel));
	kv("pitch.duet.bound_cents", fmt(r.duet_bound_cents));
	kv("pitch.duet.within_bound", r.duet_cents.mean() <= r.duet_bound_cents ? "yes" : "no");
	kv("pitch.duet.windows_without_pitch", u(r.duet_windows_without_pitch));

	kv("calibration.fitted", r.fitted ? "yes" : "no");
	if (r.fitted) {
		kv("calibration.d_ref_m", fmt(r.fitted->d_ref, 9));
		kv("calibration.f_ref_hz", fmt(r.fitted->f_ref, 6));
		kv("calibration.octave_dist_m", fmt(r.fitted->octave_dist, 9));
		kv("calibration.residual", fmt(r.calibration_residual, 12));
	}

	kv("energy.tracker_active_s", fmt(r.tracker_active_s));
	kv("energy.edge_j", fmt(r.edge_energy_j, 9));
	kv("energy.gpu_j_min", fmt(r.gpu_energy_j_min));
	kv("energy.gpu_j_max", fmt(r.gpu_energy_j_max));
	kv("energy.power_ratio_min", fmt(r.power_ratio_min, 2));
	kv("energy.power_ratio_max", fmt(r.power_ratio_max, 2));

	if (include_wall_clock) {
		kv("wall.time_s", fmt(r.wall_time_s));
		try {
			RtfReport rtf = metrics_report(static_cast<double>(r.sim_time_us) * 1e-6, r.wall_time_s);
			kv("wall.rtf", fmt(rtf.rtf, 2));
			kv("wall.rtf_flag", rtf.sub_real_time ? "sub-real-time" : "real-time");
		} catch (const ConfigError &) {
			kv("wall.rtf", "undefined");
			kv("wall.rtf_flag", "undefined");
		}
	}
	return out;
}

std::map<std::string, std::string> parse_report(const std::string &text)
{
	std::map<std::string, std::string> kv;
	std::istringstream in(text);
	std::string line;
	int lineno = 0;
	while (std::getline(in, line)) {
		++lineno;
		if (line.empty() || line[0] == '#') {
			continue;
		}
		auto eq = line.find('=');
		if (eq == std::string::npos || eq == 0) {
			throw StructuralError("report line " + std::to_string(lineno) + ": expected key=value");
		}
		kv[line.substr(0, eq)] = line.substr(eq + 1);
	}
	return kv;
}

std::string render_report(const std::map<std::string, std::string> &kv)
{
	auto get = [&](const std::string &k) {
		auto it = kv.find(k);
		return it == kv.end() ? std::string("-") : it->second;
	};
	std::ostringstream out;
	out << "show report (seed " << get("seed") << ", " << get("sim_time_us") << " us simulated)\n";
	out << "  states        " << get("fsm.trace") << '\n';
	out << "  final gates   " << get("fsm.final_gates") << '\n';
	out << "  tracking      " << get("tracker.windows") << " windows, " << get("tracker.events")
	    << " events, mean error " << get("tracking.duet.mean_px") << " px\n";
	out << "  pitch solo    mean " << get("pitch.solo.mean_cents") << " / max "
	    << get("pitch.solo.max_cents") << " cents\n";
	out << "  pitch duet    mean " << get("pitch.duet.mean_cents") << " cents, bound "
	    << get("pitch.duet.bound_cents") << " (" << get("pitch.duet.within_bound") << ")\n";
	out << "  link          sent " << get("link.sent") << ", delivered " << get("link.delivered")
	    << ", lost " << get("link.lost") << ", corrupted " << get("link.corrupted_dropped")
	    << ", " << get("link.bytes_per_event") << " B/event\n";
	out << "  latency e2e   mean " << get("latency.end_to_end.mean_us") << " us, max "
	    << get("latency.end_to_end.max_us") << " us (closure "
	    << get("latency.closure_max_abs_us") << " us)\n";
	out << "  calibration   d_ref " << get("calibration.d_ref_m") << " m, s "
	    << get("calibration.octave_dist_m") << " m\n";
	out << "  energy        edge " << get("energy.edge_j") << " J, gpu "
	    << get("energy.gpu_j_min") << ".." << get("energy.gpu_j_max") << " J, cluster/boards "
	    << get("energy.power_ratio_min") << ".." << get("energy.power_ratio_max") << "x\n";
	if (kv.contains("wall.rtf")) {
		out << "  real time     RTF " << get("wall.rtf") << " (" << get("wall.rtf_flag") << ")\n";
	}
	return out.str();
}

double power_ratio(double cluster_kw, double board_w, int boards)
{
	if (!(cluster_kw > 0.0) || !(board_w > 0.0) || boards <= 0) {
		throw ConfigError("power ratio needs positive inputs");
	}
	return cluster_kw * 1000.0 / (board_w * boards);
}

RtfReport metrics_report(double simulated_s, double wall_s)
{
	if (!(wall_s > 0.0)) {
		throw ConfigError("real-time factor is undefined for zero wall time");
	}
	if (!(simulated_s >= 0.0)) {
		throw ConfigError("simulated time must be non-negative");
	}
	const double rtf = simulated_s / wall_s;
	return {rtf, rtf < 1.0};
}

std::string format_rtf(const RtfReport &rtf)
{
	return "RTF " + fmt(rtf.rtf, 2) + (rtf.sub_real_time ? " (sub-real-time)" : "");
}

BenchResult protocol_bench(const aer::ChannelConfig &channel, std::uint64_t events_per_row,
                           const std::vector<std::size_t> &counts)
{
	channel.validate(aer::Profile::Safe);
	BenchResult result;
	{
		aer::RawSender raw;
		std::vector<aer::RawSpike> spikes(events_per_row);
		for (std::size_t i = 0; i < spikes.size(); ++i) {
			spikes[i] = {static_cast<std::uint32_t>(i) & aer::kMaxAddress, 1};
		}
		raw.send(spikes);
		result.rows.push_back({aer::Profile::Raw, 1, raw.stats().overhead(), 4.0});
	}
	std::uint64_t row_index = 0;
	for (std::size_t count : counts) {
		if (count == 0 || count > aer::kSafeMaxRecords) {
			throw ConfigError("SAFE batch size must be in 1..65535");
		}
		aer::ChannelConfig cfg = channel;
		cfg.seed = derive_seed(channel.seed, row_index++);
		aer::SafeSender sender;
		aer::Channel wire(cfg, aer::Profile::Safe);
		aer::SafeReceiver receiver(8);
		std::uint64_t sent_events = 0;
		std::uint64_t t = 0;
		while (sent_events < events_per_row) {
			const std::size_t n =
			    static_cast<std::size_t>(std::min<std::uint64_t>(count, events_per_row - sent_events));
			std::vector<aer::SafeRecord> records(n);
			for (std::size_t i = 0; i < n; ++i) {
				records[i] = {static_cast<std::uint32_t>(sent_events + i), 1, 0};
			}
			wire.push(sender.send(records, t), t);
			for (const auto &d : wire.poll()) {
				receiver.ingest(d.bytes);
			}
			sent_events += n;
			t += 100;
		}
		for (const auto &d : wire.flush()) {
			receiver.ingest(d.bytes);
		}
		receiver.finish(sender.next_seq());
		const aer::LinkStats stats = aer::combine(sender.stats(), receiver.stats());
		add_link(result.stats, stats);
		result.rows.push_back({aer::Profile::Safe, count, stats.overhead(),
		                       static_cast<double>(aer::kSafeOverheadBytes) / count +
		                           static_cast<double>(aer::kSafeRecordBytes)});
	}
	return result;
}

std::string format_bench(const BenchResult &bench)
{
	std::string out = "profile count measured_bytes_per_event expected\n";
	for (const BenchRow &r : bench.rows) {
		out += std::string(r.profile == aer::Profile::Raw ? "raw" : "safe") + ' ' +
		       std::to_string(r.count) + ' ' + fmt(r.measured, 2) + ' ' + fmt(r.expected, 2) + '\n';
	}
	const aer::LinkStats &s = bench.stats;
	out += "safe link: sent=" + std::to_string(s.sent) + " delivered=" + std::to_string(s.delivered) +
	       " lost=" + std::to_string(s.lost) + " corrupted=" + std::to_string(s.corrupted_dropped) +
	       " duplicate=" + std::to_string(s.duplicate_dropped) +
	       " late=" + std::to_string(s.late_dropped) + " reordered=" + std::to_string(s.reordered) +
	       '\n';
	return out;
}

FuzzResult fuzz_single_bit_flips(std::size_t records, std::uint64_t seed)
{
	Rng rng(seed);
	std::vector<aer::SafeRecord> recs(records);
	std::uint16_t dt = 0;
	for (auto &r : recs) {
		r.address = static_cast<std::uint32_t>(uniform_index(rng, aer::kMaxAddress + 1ull));
		r.value = static_cast<std::int16_t>(static_cast<std::int64_t>(uniform_index(rng, 65536)) - 32768);
		dt = static_cast<std::uint16_t>(dt + uniform_index(rng, 50));
		r.dt_offset = dt;
	}
	const Bytes frame = aer::safe_encode(recs, static_cast<std::uint32_t>(rng()), rng() >> 20);
	FuzzResult result;
	Bytes mutated = frame;
	for (std::size_t bit = 0; bit < frame.size() * 8; ++bit) {
		mutated[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
		++result.trials;
		if (aer::safe_decode(mutated).ok()) {
			++result.silent;
		} else {
			++result.detected;
		}
		mutated[bit / 8] = frame[bit / 8];
	}
	return result;
}

}  // namespace neuroshow
