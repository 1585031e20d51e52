#include <neuroshow/tracker.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace neuroshow {

std::string to_string(HandLabel label)
{
	return label == HandLabel::Pitch ? "pitch_hand" : "volume_hand";
}

HandId hand_for(HandLabel label)
{
	return label == HandLabel::Pitch ? HandId::Right : HandId::Left;
}

const HandPosition *HandEstimate::find(HandLabel label) const
{
	for (const auto &h : hands) {
		if (h.label == label) {
			return &h;
		}
	}
	return nullptr;
}

void TrackerConfig::validate() const
{
	input_res.validate();
	chip_res.validate();
	if (chip_res.width > input_res.width || chip_res.height > input_res.height) {
		throw ConfigError("chip resolution must not exceed input resolution");
	}
	if (window_us == 0) {
		throw ConfigError("window_us must be positive");
	}
	if (!(blob_sigma > 0.0) || !(density_half > 0.0) || !(input_gain >= 0.0) ||
	    field_substeps < 1 || !(min_separation >= 0.0) ||
	    !(confidence_decay >= 0.0 && confidence_decay <= 1.0) ||
	    !(sd_threshold >= 0.0)) {
		throw ConfigError("tracker parameters out of range");
	}
	field.validate();
	kernel.validate();
	if (!(peak_threshold > field.h)) {
		throw ConfigError("peak threshold must exceed the field resting level");
	}
	if (depth_range && !(depth_range->near >= 0.0 && depth_range->near < depth_range->far)) {
		throw ConfigError("depth range requires 0 <= near < far");
	}
}

Eigen::Vector2d upscale(const Eigen::Vector2d &chip_xy, Resolution chip,
                        Resolution input)
{
	const double rx = static_cast<double>(input.width) / chip.width;
	const double ry = static_cast<double>(input.height) / chip.height;
	return {std::clamp((chip_xy.x() + 0.5) * rx - 0.5, 0.0, input.width - 1.0),
	        std::clamp((chip_xy.y() + 0.5) * ry - 0.5, 0.0, input.height - 1.0)};
}

DenseNet<double> make_blur_net(Resolution chip, double sigma)
{
	chip.validate();
	if (!(sigma > 0.0)) {
		throw ConfigError("blur sigma must be positive");
	}
	const int r = static_cast<int>(std::ceil(3.0 * sigma));
	const auto n = static_cast<Eigen::Index>(chip.pixels());
	std::vector<Eigen::Triplet<double>> triplets;
	for (int y = 0; y < chip.height; ++y) {
		for (int x = 0; x < chip.width; ++x) {
			const Eigen::Index row = static_cast<Eigen::Index>(y) * chip.width + x;
			for (int dy = -r; dy <= r; ++dy) {
				for (int dx = -r; dx <= r; ++dx) {
					if (!chip.contains(x + dx, y + dy)) {
						continue;
					}
					const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
					triplets.emplace_back(
					    row, static_cast<Eigen::Index>(y + dy) * chip.width + (x + dx), w);
				}
			}
		}
	}
	DenseLayer<double>::Sparse w(n, n);
	w.setFromTriplets(triplets.begin(), triplets.end());
	DenseNet<double> net;
	net.layers.push_back({std::move(w), Eigen::VectorXd::Zero(n), Activation::Relu});
	return net;
}

namespace {

GridD blur(const GridD &in, double sigma)
{
	const int r = static_cast<int>(std::ceil(3.0 * sigma));
	Eigen::VectorXd g(2 * r + 1);
	for (int i = -r; i <= r; ++i) {
		g[i + r] = std::exp(-(i * i) / (2.0 * sigma * sigma));
	}
	auto pass = [&](const GridD &src) {
		GridD out = GridD::Zero(src.rows(), src.cols());
		for (Eigen::Index y = 0; y < src.rows(); ++y) {
			for (Eigen::Index x = 0; x < src.cols(); ++x) {
				double acc = 0.0;
				for (int k = -r; k <= r; ++k) {
					const Eigen::Index xx = x + k;
					if (xx >= 0 && xx < src.cols()) {
						acc += g[k + r] * src(y, xx);
					}
				}
				out(y, x) = acc;
			}
		}
		return out;
	};
	const GridD h = pass(in);
	const GridD t = h.transpose();
	return pass(t).transpose();
}

GridD saturate(const GridD &density, double half)
{
	return density.unaryExpr([half](double d) {
		const double v = std::max(d, 0.0);
		return v / (v + half);
	});
}

}  // namespace

HeatmapDetector HeatmapDetector::blob(Resolution chip, double sigma,
                                      double density_half)
{
	chip.validate();
	if (!(sigma > 0.0) || !(density_half > 0.0)) {
		throw ConfigError("blob detector parameters must be positive");
	}
	HeatmapDetector d;
	d.m_kind = DetectorKind::Blob;
	d.m_chip = chip;
	d.m_sigma = sigma;
	d.m_half = density_half;
	return d;
}

HeatmapDetector HeatmapDetector::sd_net(Resolution chip, DenseNet<double> net,
                                        double threshold, double density_half)
{
	chip.validate();
	net.validate();
	const auto n = static_cast<Eigen::Index>(chip.pixels());
	if (net.input_size() != n || net.output_size() != n) {
		throw StructuralError("detector network must map " + to_string(chip) +
		                      " frames to " + to_string(chip) + " heatmaps");
	}
	if (!(density_half > 0.0)) {
		throw ConfigError("density_half must be positive");
	}
	HeatmapDetector d;
	d.m_kind = DetectorKind::SdNet;
	d.m_chip = chip;
	d.m_half = density_half;
	d.m_runner.emplace(std::move(net), threshold);
	return d;
}

GridD HeatmapDetector::detect(const Frame &frame)
{
	if (!(frame.resolution == m_chip)) {
		throw StructuralError("detector expects " + to_string(m_chip) +
		                      " frames, got " + to_string(frame.resolution));
	}
	const GridD counts = frame.cells.cast<double>().cwiseAbs();
	if (m_kind == DetectorKind::Blob) {
		return saturate(blur(counts, m_sigma), m_half);
	}
	const Eigen::VectorXd flat =
	    Eigen::Map<const Eigen::VectorXd>(counts.data(), counts.size());
	const Eigen::VectorXd out = m_runner->step(flat);
	const GridD density = Eigen::Map<const GridD>(out.data(), m_chip.height, m_chip.width);
	return saturate(density, m_half);
}

std::vector<std::uint64_t> HeatmapDetector::spike_counts() const
{
	return m_runner ? m_runner->spike_counts() : std::vector<std::uint64_t>{};
}

std::vector<HandPosition> assign_hands(std::span<const Peak> peaks, bool mirror)
{
	std::vector<const Peak *> top;
	for (const auto &p : peaks) {
		if (top.size() == 2) {
			break;
		}
		top.push_back(&p);
	}
	std::vector<HandPosition> hands;
	if (top.empty()) {
		return hands;
	}
	if (top.size() == 1) {
		hands.push_back({HandLabel::Pitch, top[0]->centroid.x(), top[0]->centroid.y(), 1.0});
		return hands;
	}
	const Peak *left = top[0];
	const Peak *right = top[1];
	if (right->centroid.x() < left->centroid.x()) {
		std::swap(left, right);
	}
	const HandLabel left_label = mirror ? HandLabel::Pitch : HandLabel::Volume;
	const HandLabel right_label = mirror ? HandLabel::Volume : HandLabel::Pitch;
	hands.push_back({left_label, left->centroid.x(), left->centroid.y(), 1.0});
	hands.push_back({right_label, right->centroid.x(), right->centroid.y(), 1.0});
	std::sort(hands.begin(), hands.end(), [](const auto &a, const auto &b) {
		return a.label < b.label;
	});
	return hands;
}

Eigen::Vector2d heatmap_argmax(const GridD &heatmap, int x0, int x1)
{
	x0 = std::max(0, x0);
	x1 = std::min(static_cast<int>(heatmap.cols()), x1);
	double best = -1.0;
	Eigen::Vector2d arg(x0, 0);
	for (Eigen::Index y = 0; y < heatmap.rows(); ++y) {
		for (int x = x0; x < x1; ++x) {
			if (heatmap(y, x) > best) {
				best = heatmap(y, x);
				arg = {static_cast<double>(x), static_cast<double>(y)};
			}
		}
	}
	return arg;
}

namespace {

HeatmapDetector make_detector(const TrackerConfig &cfg,
                              std::optional<DenseNet<double>> net)
{
	if (cfg.detector == DetectorKind::Blob) {
		return HeatmapDetector::blob(cfg.chip_res, cfg.blob_sigma, cfg.density_half);
	}
	return HeatmapDetector::sd_net(
	    cfg.chip_res, net ? std::move(*net) : make_blur_net(cfg.chip_res, cfg.blob_sigma),
	    cfg.sd_threshold, cfg.density_half);
}

}  // namespace

Tracker::Tracker(TrackerConfig config, std::optional<DenseNet<double>> detector_net)
    : m_config((config.validate(), std::move(config))),
      m_detector(make_detector(m_config, std::move(detector_net))),
      m_kernel(make_kernel(m_config.kernel, default_kernel_radius(m_config.kernel))),
      m_field(Field::at_rest(m_config.chip_res, m_config.field)),
      m_heatmap(GridD::Zero(m_config.chip_res.height, m_config.chip_res.width)),
      m_chip_frame(m_config.chip_res, 0, 0)
{
}

void Tracker::set_depth(DepthFrame depth)
{
	if (!(depth.resolution == m_config.input_res)) {
		throw StructuralError("depth frame " + to_string(depth.resolution) +
		                      " does not match tracker input " +
		                      to_string(m_config.input_res));
	}
	m_depth = std::move(depth);
}

HandEstimate Tracker::step(std::span<const Event> events, std::uint64_t t0)
{
	const std::uint64_t t1 = t0 + m_config.window_us;
	Frame frame = frame_accumulate(events, t0, t1, m_config.input_res);
	if (m_config.depth_range && m_depth) {
		frame = depth_mask(frame, *m_depth, m_config.depth_range->near,
		                   m_config.depth_range->far);
	}
	m_events_seen += static_cast<std::uint64_t>(frame.total());
	m_chip_frame = frame_downsample(frame, m_config.chip_res);
	m_heatmap = m_detector.detect(m_chip_frame);
	const GridD input = m_config.input_gain * m_heatmap;
	for (int i = 0; i < m_config.field_substeps; ++i) {
		m_field = field_step(m_field, input, m_kernel);
	}
	m_peaks = detect_peaks(m_field, m_config.peak_threshold, m_config.min_separation);
	std::erase_if(m_peaks, [this](const Peak &p) { return p.mass < m_config.min_peak_mass; });

	HandEstimate est;
	est.t = t1;
	if (m_peaks.empty()) {
		if (m_last) {
			est.hands = m_last->hands;
			for (auto &h : est.hands) {
				h.confidence *= m_config.confidence_decay;
			}
		}
		m_last = est;
		return est;
	}
	est.hands = assign_hands(m_peaks, m_config.mirror);
	for (auto &h : est.hands) {
		const auto it = std::find_if(m_peaks.begin(), m_peaks.end(), [&](const Peak &p) {
			return p.centroid.x() == h.x && p.centroid.y() == h.y;
		});
		h.confidence = sigmoid(it->max_activation, m_config.field.beta);
		const Eigen::Vector2d up =
		    upscale({h.x, h.y}, m_config.chip_res, m_config.input_res);
		h.x = up.x();
		h.y = up.y();
	}
	m_last = est;
	return est;
}

Bytes Tracker::overlay_pgm() const
{
	GridD img = 40000.0 * m_heatmap;
	for (Eigen::Index y = 0; y < img.rows(); ++y) {
		for (Eigen::Index x = 0; x < img.cols(); ++x) {
			if (m_field.u(y, x) > m_config.peak_threshold) {
				img(y, x) = std::max(img(y, x), 50000.0);
			}
		}
	}
	for (const auto &p : m_peaks) {
		const auto cx = static_cast<Eigen::Index>(std::lround(p.centroid.x()));
		const auto cy = static_cast<Eigen::Index>(std::lround(p.centroid.y()));
		for (int d = -2; d <= 2; ++d) {
			if (cx + d >= 0 && cx + d < img.cols()) {
				img(cy, cx + d) = 65535.0;
			}
			if (cy + d >= 0 && cy + d < img.rows()) {
				img(cy + d, cx) = 65535.0;
			}
		}
	}
	return grid_to_pgm16(img, 0.0, 65535.0);
}

TrackEvaluation evaluate_tracking(const EventStream &events, const Trajectory &truth,
                                  const TrackerConfig &config, std::uint64_t steps)
{
	Tracker tracker(config);
	const Resolution chip = config.chip_res;
	const int mid = chip.width / 2;

	struct Series {
		std::vector<Eigen::Vector2d> dnf;
		std::vector<Eigen::Vector2d> raw;
	};
	Series series[2];
	TrackEvaluation ev;
	ev.steps = steps;
	double err_sum = 0.0;

	std::size_t begin = 0;
	for (std::uint64_t k = 0; k < steps; ++k) {
		const std::uint64_t t0 = k * config.window_us;
		const std::uint64_t t1 = t0 + config.window_us;
		while (begin < events.size() && events[begin].t < t0) {
			++begin;
		}
		std::size_t end = begin;
		while (end < events.size() && events[end].t < t1) {
			++end;
		}
		const HandEstimate est =
		    tracker.step(std::span(events).subspan(begin, end - begin), t0);
		begin = end;

		for (HandLabel label : {HandLabel::Pitch, HandLabel::Volume}) {
			const auto gt = truth.position_at(hand_for(label), t0 + config.window_us / 2);
			if (!gt) {
				continue;
			}
			const bool left_half = (label == HandLabel::Pitch) == config.mirror;
			const Eigen::Vector2d arg = left_half
			                                ? heatmap_argmax(tracker.last_heatmap(), 0, mid)
			                                : heatmap_argmax(tracker.last_heatmap(), mid, chip.width);
			auto &s = series[label == HandLabel::Pitch ? 0 : 1];
			const HandPosition *h = est.find(label);
			if (!h) {
				++ev.missing;
				continue;
			}
			const Eigen::Vector2d e(h->x - gt->x(), h->y - gt->y());
			s.dnf.push_back(e);
			s.raw.push_back(upscale(arg, chip, config.input_res) - *gt);
			err_sum += e.norm();
			++ev.hand_samples;
		}
	}

	auto spread = [](const std::vector<Eigen::Vector2d> &v, double &acc) {
		if (v.empty()) {
			return;
		}
		Eigen::Vector2d mean = Eigen::Vector2d::Zero();
		for (const auto &e : v) {
			mean += e;
		}
		mean /= static_cast<double>(v.size());
		for (const auto &e : v) {
			acc += (e - mean).squaredNorm();
		}
	};
	double dnf = 0.0, raw = 0.0;
	for (const auto &s : series) {
		spread(s.dnf, dnf);
		spread(s.raw, raw);
	}
	if (ev.hand_samples > 0) {
		const auto n = static_cast<double>(ev.hand_samples);
		ev.mean_error_px = err_sum / n;
		ev.dnf_variance = dnf / n;
		ev.raw_variance = raw / n;
	}
	return ev;
}

std::string format_estimate(const HandEstimate &est)
{
	std::string out;
	char buf[160];
	for (const auto &h : est.hands) {
		std::snprintf(buf, sizeof buf, "%llu,%s,%.3f,%.3f,%.6f\n",
		              static_cast<unsigned long long>(est.t),
		              to_string(h.label).c_str(), h.x, h.y, h.confidence);
		out += buf;
	}
	return out;
}

}  // namespace neuroshow
