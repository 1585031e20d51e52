#ifndef NEUROSHOW_TRACKER_HPP
#define NEUROSHOW_TRACKER_HPP

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <neuroshow/dnf.hpp>
#include <neuroshow/event_core.hpp>
#include <neuroshow/sigma_delta.hpp>

namespace neuroshow {

enum class HandLabel { Pitch, Volume };

std::string to_string(HandLabel label);
/// The performer's right hand plays pitch, the left hand plays volume.
HandId hand_for(HandLabel label);

struct HandPosition {
	HandLabel label = HandLabel::Pitch;
	double x = 0.0;
	double y = 0.0;
	double confidence = 0.0;
};

struct HandEstimate {
	std::uint64_t t = 0;
	std::vector<HandPosition> hands;  ///< at most two, labels unique

	const HandPosition *find(HandLabel label) const;
};

enum class DetectorKind { Blob, SdNet };

struct DepthRange {
	double near = 0.3;
	double far = DepthFrame::kDefaultFarMax;
};

struct TrackerConfig {
	Resolution input_res{240, 180};
	Resolution chip_res{86, 65};
	std::uint64_t window_us = 10000;
	DetectorKind detector = DetectorKind::Blob;

	double blob_sigma = 2.0;        ///< chip cells
	double density_half = 2.0;      ///< density mapped to heatmap value 0.5
	double sd_threshold = 0.05;     ///< sigma-delta threshold for DetectorKind::SdNet

	double input_gain = 40.0;       ///< heatmap -> field input scale
	FieldParams field;
	KernelParams kernel = KernelParams::tracking();
	int field_substeps = 4;

	double peak_threshold = 0.0;
	double min_separation = 6.0;    ///< chip cells
	double min_peak_mass = 1.0;
	double confidence_decay = 0.5;
	bool mirror = true;
	std::optional<DepthRange> depth_range;

	void validate() const;
};

/// Downsample-inverse: chip-cell coordinate -> input pixel coordinate.
Eigen::Vector2d upscale(const Eigen::Vector2d &chip_xy, Resolution chip,
                        Resolution input);

/// Sparse Gaussian-blur layer over a flattened chip frame (ReLU).
DenseNet<double> make_blur_net(Resolution chip, double sigma);

/**
 * Surrogate for the trained hand detector. Both kinds produce a non-negative
 * heatmap d / (d + density_half), where d is a blurred event density; the
 * sigma-delta kind computes d with a network run through SdRunner, so it keeps
 * state across frames.
 */
class HeatmapDetector {
public:
	static HeatmapDetector blob(Resolution chip, double sigma, double density_half);
	static HeatmapDetector sd_net(Resolution chip, DenseNet<double> net,
	                              double threshold, double density_half);

	GridD detect(const Frame &frame);

	DetectorKind kind() const { return m_kind; }
	Resolution resolution() const { return m_chip; }
	/// Spikes sent per network layer so far (empty for blob).
	std::vector<std::uint64_t> spike_counts() const;

private:
	HeatmapDetector() = default;

	DetectorKind m_kind = DetectorKind::Blob;
	Resolution m_chip;
	double m_sigma = 2.0;
	double m_half = 1.0;
	std::optional<SdRunner<double>> m_runner;
};

/// Labels up to two peaks (highest mass first). With mirror, the image-left
/// peak is the pitch hand. A single peak is always the pitch hand.
std::vector<HandPosition> assign_hands(std::span<const Peak> peaks, bool mirror);

/// Argmax cell of a heatmap within columns [x0, x1); ties go to scan order.
Eigen::Vector2d heatmap_argmax(const GridD &heatmap, int x0, int x1);

/**
 * Sequential tracking pipeline: accumulate -> (depth mask) -> downsample ->
 * heatmap -> field -> peaks -> upscale + label.
 */
class Tracker {
public:
	explicit Tracker(TrackerConfig config,
	                 std::optional<DenseNet<double>> detector_net = std::nullopt);

	/// Processes the window [t0, t0 + window_us) of `events`.
	HandEstimate step(std::span<const Event> events, std::uint64_t t0);

	void set_depth(DepthFrame depth);

	const TrackerConfig &config() const { return m_config; }
	const Field &field() const { return m_field; }
	const GridD &last_heatmap() const { return m_heatmap; }
	const Frame &last_chip_frame() const { return m_chip_frame; }
	const std::vector<Peak> &last_peaks() const { return m_peaks; }
	const HeatmapDetector &detector() const { return m_detector; }
	std::uint64_t events_seen() const { return m_events_seen; }

	/// Heatmap with supra-threshold field cells and peak centroids marked.
	Bytes overlay_pgm() const;

private:
	TrackerConfig m_config;
	HeatmapDetector m_detector;
	LateralKernel m_kernel;
	Field m_field;
	std::optional<DepthFrame> m_depth;
	std::optional<HandEstimate> m_last;
	GridD m_heatmap;
	Frame m_chip_frame;
	std::vector<Peak> m_peaks;
	std::uint64_t m_events_seen = 0;
};

/// Convenience wrapper matching the pipeline operation name.
inline HandEstimate track_step(Tracker &tracker, std::span<const Event> events,
                               std::uint64_t t0)
{
	return tracker.step(events, t0);
}

/// Per-hand comparison of the field-filtered track and the raw heatmap argmax
/// against ground truth at each window midpoint.
struct TrackEvaluation {
	std::uint64_t steps = 0;
	std::uint64_t hand_samples = 0;   ///< (step, hand) pairs with an estimate
	std::uint64_t missing = 0;        ///< (step, hand) pairs without one
	double mean_error_px = 0.0;
	/// Mean squared deviation of the error vector from its per-hand mean, px^2.
	double dnf_variance = 0.0;
	double raw_variance = 0.0;
};

/**
 * Runs `steps` tracker windows from t = 0. The raw track is the argmax of the
 * detector heatmap in the image half that belongs to each hand (left half for
 * the pitch hand when mirrored), upscaled like the field estimate.
 */
TrackEvaluation evaluate_tracking(const EventStream &events, const Trajectory &truth,
                                  const TrackerConfig &config, std::uint64_t steps);

/// `t_us,label,x,y,confidence`, one line per hand.
std::string format_estimate(const HandEstimate &est);

}  // namespace neuroshow

#endif  // NEUROSHOW_TRACKER_HPP
