#ifndef NEUROSHOW_EVENT_CORE_HPP
#define NEUROSHOW_EVENT_CORE_HPP

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <neuroshow/common.hpp>

namespace neuroshow {

struct Resolution {
	int width = 0;
	int height = 0;

	/// Largest sensor we model (1280x720); enforced by validate().
	static constexpr int kMaxWidth = 1280;
	static constexpr int kMaxHeight = 720;

	void validate() const;
	std::size_t pixels() const
	{
		return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
	}
	bool contains(int x, int y) const
	{
		return x >= 0 && y >= 0 && x < width && y < height;
	}
	friend bool operator==(const Resolution &, const Resolution &) = default;
};

std::string to_string(const Resolution &res);

/// One polarity change reported by the sensor.
struct Event {
	std::uint64_t t = 0;  ///< microseconds since stream epoch
	std::uint16_t x = 0;
	std::uint16_t y = 0;
	std::int8_t polarity = 1;

	friend bool operator==(const Event &, const Event &) = default;
};

using EventStream = std::vector<Event>;

std::string to_string(const Event &ev);

/// Events of a time-ordered stream with t in [t0, t1).
std::span<const Event> window_slice(std::span<const Event> stream,
                                    std::uint64_t t0, std::uint64_t t1);

/// Event counts over a half-open time window [t_start, t_end).
struct Frame {
	Resolution resolution;
	Grid<std::int32_t> cells;
	std::uint64_t t_start = 0;
	std::uint64_t t_end = 0;

	Frame() = default;
	Frame(Resolution res, std::uint64_t t0, std::uint64_t t1);

	std::int64_t total() const { return cells.cast<std::int64_t>().sum(); }
};

enum class FrameMode { Unsigned, Signed };

Frame frame_accumulate(std::span<const Event> stream, std::uint64_t t0,
                       std::uint64_t t1, Resolution resolution,
                       FrameMode mode = FrameMode::Unsigned);

/// Count-preserving floor-index downsampling. Throws if target exceeds source.
Frame frame_downsample(const Frame &frame, Resolution target);

/// Depth image registered to the event grid. Non-positive values mean "no
/// reading".
struct DepthFrame {
	static constexpr double kNoReading = 0.0;
	static constexpr double kDefaultFarMax = 3.0;

	Resolution resolution;
	GridD depth;

	DepthFrame() = default;
	explicit DepthFrame(Resolution res, double fill = kNoReading);

	bool in_range(int x, int y, double near, double far) const;
};

Frame depth_mask(const Frame &frame, const DepthFrame &depth, double near,
                 double far);
EventStream depth_mask(std::span<const Event> stream, Resolution resolution,
                       const DepthFrame &depth, double near, double far);

enum class HandId { Left, Right };
enum class LengthUnit { Pixels, Meters };

struct TrajectorySample {
	std::uint64_t t = 0;
	HandId hand = HandId::Right;
	double x = 0.0;
	double y = 0.0;
};

/// Ground-truth hand paths. Positions are linearly interpolated between
/// samples of the same hand; a hand exists only within its sample span.
struct Trajectory {
	LengthUnit unit = LengthUnit::Pixels;
	std::vector<TrajectorySample> samples;

	void validate() const;
	std::vector<TrajectorySample> samples_of(HandId hand) const;
	std::optional<Eigen::Vector2d> position_at(HandId hand, std::uint64_t t) const;
	/// Earliest and latest sample time over all hands; nullopt if empty.
	std::optional<std::pair<std::uint64_t, std::uint64_t>> span() const;
};

/// Sinusoidal hand motion around a center, used for synthetic recordings.
struct WaveSpec {
	HandId hand = HandId::Right;
	Eigen::Vector2d center{120.0, 90.0};
	Eigen::Vector2d amplitude{40.0, 0.0};
	double frequency_hz = 1.0;
	double phase = 0.0;
};

Trajectory make_waving_trajectory(const std::vector<WaveSpec> &hands,
                                  std::uint64_t duration_us,
                                  std::uint64_t sample_step_us = 1000);

/// Two hands waving side by side, the pitch hand image-left.
Trajectory two_hand_wave(Resolution resolution, std::uint64_t duration_us);

/// Text form: a `unit pixels|meters` line, then `<t_us> <left|right> <x> <y>`
/// per sample. '#' starts a comment.
Trajectory parse_trajectory(const std::string &text);
std::string format_trajectory(const Trajectory &trajectory);

struct SynthParams {
	double blob_radius = 8.0;           ///< pixels
	double contrast_threshold = 0.15;   ///< intensity units per event
	double rate_scale = 1.0;            ///< probability factor per threshold crossing
	std::uint64_t micro_step_us = 1000;
	double pixels_per_meter = 1.0;      ///< used only for metric trajectories
};

/// Renders anti-aliased disks along the trajectories, sampled every micro-step.
/// Each pixel keeps a reference intensity; when the rendered intensity drifts
/// k whole thresholds away, k events are emitted (scaled by rate_scale) and the
/// reference moves by k thresholds. Deterministic for a fixed seed.
EventStream synth_hand_events(const Trajectory &trajectories,
                              const SynthParams &params, Resolution resolution,
                              std::uint64_t seed);

/// Disk intensity at pixel (x, y) for a blob centered at (cx, cy).
double disk_intensity(double x, double y, double cx, double cy, double radius);

/// Adds `fraction * stream.size()` uniformly random events over the stream's
/// time span, keeping the result time-ordered.
EventStream inject_distractors(const EventStream &stream, double fraction,
                               Resolution resolution, std::uint64_t seed);

// EVT1 file codec.
inline constexpr std::size_t kEvtHeaderBytes = 12;
inline constexpr std::size_t kEvtRecordBytes = 16;

struct EventFile {
	Resolution resolution;
	EventStream events;
};

Bytes encode_evt(const EventStream &stream, Resolution resolution);
EventFile decode_evt(ByteView bytes);

void write_evt(const std::filesystem::path &path, const EventStream &stream,
               Resolution resolution);
EventFile read_evt(const std::filesystem::path &path);

Bytes read_file_bytes(const std::filesystem::path &path);
void write_file_bytes(const std::filesystem::path &path, ByteView bytes);

}  // namespace neuroshow

#endif  // NEUROSHOW_EVENT_CORE_HPP
