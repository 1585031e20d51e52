#ifndef NEUROSHOW_HARNESS_HPP
#define NEUROSHOW_HARNESS_HPP

#include <algorithm>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <neuroshow/aer_transport.hpp>
#include <neuroshow/event_core.hpp>
#include <neuroshow/orchestrator.hpp>
#include <neuroshow/theremin.hpp>
#include <neuroshow/tracker.hpp>

namespace neuroshow {

/// Bounded FIFO between two pipeline stages. push blocks while full; pop
/// blocks until an item arrives or the channel is closed and drained.
template <typename T>
class BoundedChannel {
public:
	explicit BoundedChannel(std::size_t capacity) : m_capacity(capacity == 0 ? 1 : capacity) {}

	void push(T item)
	{
		std::unique_lock lock(m_mutex);
		m_not_full.wait(lock, [&] { return m_queue.size() < m_capacity || m_closed; });
		if (m_closed) {
			return;
		}
		m_queue.push_back(std::move(item));
		m_not_empty.notify_one();
	}

	std::optional<T> pop()
	{
		std::unique_lock lock(m_mutex);
		m_not_empty.wait(lock, [&] { return !m_queue.empty() || m_closed; });
		if (m_queue.empty()) {
			return std::nullopt;
		}
		T item = std::move(m_queue.front());
		m_queue.pop_front();
		m_not_full.notify_one();
		return item;
	}

	void close()
	{
		std::lock_guard lock(m_mutex);
		m_closed = true;
		m_not_empty.notify_all();
		m_not_full.notify_all();
	}

private:
	std::size_t m_capacity;
	std::deque<T> m_queue;
	bool m_closed = false;
	std::mutex m_mutex;
	std::condition_variable m_not_empty;
	std::condition_variable m_not_full;
};

/// Declared hardware constants used for energy estimates (not measurements).
struct EnergyConstants {
	double edge_tracker_w = 0.004;
	double gpu_w_min = 5.0;
	double gpu_w_max = 10.0;
	double cluster_kw = 6.5;
	double board_w_min = 48.0;
	double board_w_max = 120.0;
	int boards = 10;

	void validate() const;
};

/// Virtual-time cost of each stage per tracker window.
struct LatencyModel {
	std::uint64_t sensor_us = 220;
	std::uint64_t tracker_base_us = 800;
	double tracker_per_event_ns = 50.0;
	std::uint64_t orchestrator_us = 100;
	std::uint64_t synth_us = 1000;
};

struct SimConfig {
	std::string scenario_path;  ///< empty: built-in demo scenario
	std::string score_path;     ///< empty: eight-note showcase scale
	TrackerConfig tracker;
	aer::ChannelConfig channel;
	std::uint32_t receiver_window = 8;
	PitchCalibration instrument;   ///< true pitch law of the simulated instrument
	PitchCalibration calibration;  ///< controller's initial belief
	VolumeRange volume;
	AntennaGeometry geometry;
	TrajectoryOptions trajectory;
	SynthParams synth;
	double tremble_px = 4.0;   ///< hand motion orthogonal to the controlled axis
	double tremble_hz = 3.0;
	int calibration_points = 9;
	double calibration_noise_cents = 0.0;
	std::uint64_t control_step_us = 1000;
	std::optional<std::uint64_t> seed;
	bool threaded = false;
	std::size_t channel_capacity = 16;
	LatencyModel latency;
	EnergyConstants energy;

	void validate() const;
};

/// JSON object with the keys documented in the README; unknown keys are errors.
SimConfig load_sim_config(const std::string &json_text);

struct RunningStat {
	std::uint64_t count = 0;
	double sum = 0.0;
	double max = 0.0;

	void add(double x)
	{
		max = count == 0 ? x : std::max(max, x);
		sum += x;
		++count;
	}
	double mean() const { return count == 0 ? 0.0 : sum / static_cast<double>(count); }
};

struct StageLatency {
	RunningStat sensor;
	RunningStat tracker;
	RunningStat link;
	RunningStat orchestrator;
	RunningStat synth;
	RunningStat end_to_end;
	/// Largest |end_to_end - sum of stages| over all batches, microseconds.
	std::uint64_t closure_max_abs_us = 0;
};

struct RunReport {
	std::uint64_t seed = 0;
	std::uint64_t sim_time_us = 0;
	std::vector<TraceEntry> trace;
	StageLatency latency;
	aer::LinkStats link;

	RunningStat solo_cents;
	RunningStat duet_cents;
	RunningStat duet_tracking_px;
	double cents_per_pixel = 0.0;
	double duet_bound_cents = 0.0;
	std::uint64_t duet_windows_without_pitch = 0;

	std::uint64_t windows = 0;
	std::uint64_t events = 0;
	std::uint64_t messages_delivered = 0;
	std::uint64_t messages_dropped = 0;
	std::vector<std::uint64_t> spike_counts;

	std::optional<PitchCalibration> fitted;
	double calibration_residual = 0.0;

	double tracker_active_s = 0.0;
	double edge_energy_j = 0.0;
	double gpu_energy_j_min = 0.0;
	double gpu_energy_j_max = 0.0;
	double power_ratio_min = 0.0;
	double power_ratio_max = 0.0;

	/// Synthesizer control trace in show time (not part of the text report).
	std::vector<ControlPoint> control_trace;

	double wall_time_s = 0.0;
};

/// Built-in scenario: conversation, calibration, solo, duet, teaching.
std::vector<ScenarioStep> demo_scenario();

/// Score trajectory in image pixels with tremble added orthogonally to the
/// controlled axis of each hand, sampled every `step_us`.
Trajectory performer_trajectory(const Score &score, const SimConfig &cfg,
                                std::uint64_t step_us = 1000);

RunReport run_show(const SimConfig &cfg);
RunReport run_show(const SimConfig &cfg, const std::vector<ScenarioStep> &steps,
                   const Score &score);

/// Key=value lines in a fixed order. Wall-clock fields are appended only when
/// requested, so reports without them are byte-comparable across runs.
std::string format_report(const RunReport &report, bool include_wall_clock);
std::map<std::string, std::string> parse_report(const std::string &text);
/// Human-readable rendering of a parsed key=value report.
std::string render_report(const std::map<std::string, std::string> &kv);

double power_ratio(double cluster_kw, double board_w, int boards);

struct RtfReport {
	double rtf = 0.0;
	bool sub_real_time = false;
};

/// Real-time factor simulated / wall; throws on non-positive wall time.
RtfReport metrics_report(double simulated_s, double wall_s);
std::string format_rtf(const RtfReport &rtf);

struct BenchRow {
	aer::Profile profile = aer::Profile::Safe;
	std::size_t count = 0;     ///< records per frame (SAFE) or spikes per send (RAW)
	double measured = 0.0;     ///< bytes per event on the wire
	double expected = 0.0;
};

struct BenchResult {
	std::vector<BenchRow> rows;
	aer::LinkStats stats;      ///< SAFE link counters summed over all rows
};

/// Sends `events_per_row` events per batch size through the channel.
BenchResult protocol_bench(const aer::ChannelConfig &channel,
                           std::uint64_t events_per_row = 1000,
                           const std::vector<std::size_t> &counts = {1, 10, 100, 1000});
std::string format_bench(const BenchResult &bench);

struct FuzzResult {
	std::uint64_t trials = 0;
	std::uint64_t detected = 0;
	std::uint64_t silent = 0;  ///< decoded successfully with different content
};

/// Flips every bit of a random `records`-record frame, one at a time.
FuzzResult fuzz_single_bit_flips(std::size_t records, std::uint64_t seed);

}  // namespace neuroshow

#endif  // NEUROSHOW_HARNESS_HPP
