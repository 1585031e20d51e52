#ifndef NEUROSHOW_THEREMIN_HPP
#define NEUROSHOW_THEREMIN_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <neuroshow/common.hpp>
#include <neuroshow/event_core.hpp>
#include <neuroshow/tracker.hpp>

namespace neuroshow {

struct Note {
	int midi = 60;
	int duration_ms = 500;

	friend bool operator==(const Note &, const Note &) = default;
};

struct VolumePoint {
	double t_ms = 0.0;
	double level = 1.0;  ///< [0, 1]

	friend bool operator==(const VolumePoint &, const VolumePoint &) = default;
};

struct Score {
	std::vector<Note> notes;
	std::vector<VolumePoint> volumes;

	void validate() const;
	/// Total note time at the given tempo factor (1 = as written).
	std::uint64_t duration_us(double tempo = 1.0) const;

	friend bool operator==(const Score &, const Score &) = default;
};

/// Line format: `NOTE <midi> <duration_ms>` and `VOL <t_ms> <level>`; '#'
/// starts a comment.
Score parse_score(const std::string &text);
std::string format_score(const Score &score);

/// C major from C4 to C5, eight notes.
Score showcase_scale(int duration_ms = 500);

/// Equal temperament, A4 = 440 Hz.
double note_freq(int midi);
/// Interval from `ref` to `f` in cents.
double cents_between(double f, double ref);

/// Exponential distance-to-pitch law: f = f_ref * 2^((d_ref - d) / s).
struct PitchCalibration {
	double d_ref = 0.40;         ///< m
	double f_ref = 261.6255653005986;  ///< Hz (C4)
	double octave_dist = 0.24;   ///< m per octave

	void validate() const;
};

/// Volume-hand heights mapped linearly to amplitude 0..1.
struct VolumeRange {
	double h_min = 0.05;
	double h_max = 0.35;

	void validate() const;
};

/// Where the antennas sit in the camera image and its metric scale.
struct AntennaGeometry {
	double pixel_to_meter = 0.004;
	double pitch_antenna_x = 0.0;    ///< pixel column of the pitch rod
	double volume_antenna_y = 179.0; ///< pixel row of the volume loop
	double pitch_hand_y = 90.0;      ///< resting row of the pitch hand
	double volume_hand_x = 180.0;    ///< resting column of the volume hand

	void validate() const;
	double pitch_distance(double x_px) const;
	double volume_height(double y_px) const;
	double pitch_x_for(double distance_m) const;
	double volume_y_for(double height_m) const;
};

double pitch_from_distance(double d, const PitchCalibration &cal);
/// Throws if the frequency would need a negative distance.
double distance_for_pitch(double f, const PitchCalibration &cal);
double amp_from_height(double h, const VolumeRange &vol);
double height_for_amp(double level, const VolumeRange &vol);

struct ControlPoint {
	std::uint64_t t = 0;  ///< us
	double freq = 0.0;    ///< Hz
	double amp = 0.0;     ///< [0, 1]

	friend bool operator==(const ControlPoint &, const ControlPoint &) = default;
};

/// Metric form: pitch distance and optional volume height in meters.
ControlPoint control_from_metric(std::uint64_t t, double d_pitch,
                                 std::optional<double> h_volume,
                                 const PitchCalibration &cal, const VolumeRange &vol);

/// Tracked hands (input-resolution pixels) to synthesizer control. A missing
/// volume hand plays at full amplitude; a missing pitch hand is an error.
ControlPoint hands_to_control(const HandEstimate &est, const PitchCalibration &cal,
                              const VolumeRange &vol, const AntennaGeometry &geometry);

struct TrajectoryOptions {
	double tempo = 1.0;
	double ramp_ms = 30.0;  ///< linear transition at the start of each note
};

/// Start time of each note plus the end time (size notes + 1), microseconds.
std::vector<std::uint64_t> note_onsets(const Score &score, double tempo = 1.0);

/// Ramp length actually used before note `i` (zero for the first note).
std::uint64_t note_ramp_us(const Score &score, std::size_t i, const TrajectoryOptions &opts);

/**
 * Hand motion that plays `score`: the right (pitch) hand holds
 * x = distance for each note after a linear ramp from the previous note, the
 * left (volume) hand follows the volume envelope as y = height. Metric units.
 */
Trajectory score_to_trajectory(const Score &score, const PitchCalibration &cal,
                               const VolumeRange &vol, const TrajectoryOptions &opts = {});

/// Metric score trajectory -> image-plane trajectory for event synthesis.
Trajectory trajectory_to_pixels(const Trajectory &metric, const AntennaGeometry &geometry);

/// Samples a metric trajectory into control points every `step_us`.
std::vector<ControlPoint> trajectory_to_controls(const Trajectory &metric,
                                                 const PitchCalibration &cal,
                                                 const VolumeRange &vol,
                                                 std::uint64_t step_us);

struct CalibrationSample {
	double distance = 0.0;  ///< m
	double freq = 0.0;      ///< Hz
};

/**
 * Least-squares fit of log2 f = log2 f_ref + (d_ref - d) / s over the
 * samples. f_ref is an anchor chosen by the caller (the family of laws has one
 * redundant parameter); d_ref and s are fitted.
 */
PitchCalibration calibrate_pitch(std::span<const CalibrationSample> samples,
                                 double f_ref = note_freq(60));

/// Sum of squared log2-frequency residuals.
double calibration_residual(std::span<const CalibrationSample> samples,
                            const PitchCalibration &cal);

struct Vibrato {
	double depth_cents = 0.0;
	double rate_hz = 5.0;
};

/// Phase-continuous sine synthesis between consecutive control points
/// (linear interpolation of frequency and amplitude), 16-bit full scale.
std::vector<std::int16_t> render_trace(std::span<const ControlPoint> points,
                                       int sample_rate,
                                       std::optional<Vibrato> vibrato = std::nullopt);

inline constexpr std::size_t kWavHeaderBytes = 44;

/// RIFF/WAVE, PCM 16-bit mono, little-endian.
Bytes encode_wav(std::span<const std::int16_t> samples, int sample_rate);

}  // namespace neuroshow

#endif  // NEUROSHOW_THEREMIN_HPP
