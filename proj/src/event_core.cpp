#include <neuroshow/event_core.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <numbers>
#include <sstream>

namespace neuroshow {

void Resolution::validate() const
{
	if (width < 1 || height < 1 || width > kMaxWidth || height > kMaxHeight) {
		throw StructuralError("invalid resolution " + to_string(*this));
	}
}

std::string to_string(const Resolution &res)
{
	return std::to_string(res.width) + "x" + std::to_string(res.height);
}

std::string to_string(const Event &ev)
{
	std::ostringstream ss;
	ss << "event{t=" << ev.t << ", x=" << ev.x << ", y=" << ev.y
	   << ", p=" << static_cast<int>(ev.polarity) << "}";
	return ss.str();
}

std::span<const Event> window_slice(std::span<const Event> stream,
                                    std::uint64_t t0, std::uint64_t t1)
{
	auto lo = std::partition_point(stream.begin(), stream.end(),
	                               [t0](const Event &e) { return e.t < t0; });
	auto hi = std::partition_point(lo, stream.end(),
	                               [t1](const Event &e) { return e.t < t1; });
	return {lo, hi};
}

Frame::Frame(Resolution res, std::uint64_t t0, std::uint64_t t1)
    : resolution(res),
      cells(Grid<std::int32_t>::Zero(res.height, res.width)),
      t_start(t0),
      t_end(t1)
{
}

Frame frame_accumulate(std::span<const Event> stream, std::uint64_t t0,
                       std::uint64_t t1, Resolution resolution, FrameMode mode)
{
	resolution.validate();
	if (!(t0 < t1)) {
		throw StructuralError("empty accumulation window");
	}
	Frame frame(resolution, t0, t1);
	for (const auto &ev : stream) {
		if (!resolution.contains(ev.x, ev.y) ||
		    (ev.polarity != 1 && ev.polarity != -1)) {
			throw StructuralError("out-of-bounds " + to_string(ev) + " for " +
			                      to_string(resolution));
		}
		if (ev.t < t0 || ev.t >= t1) {
			continue;
		}
		frame.cells(ev.y, ev.x) += mode == FrameMode::Signed ? ev.polarity : 1;
	}
	return frame;
}

Frame frame_downsample(const Frame &frame, Resolution target)
{
	target.validate();
	const Resolution &src = frame.resolution;
	if (target.width > src.width || target.height > src.height) {
		throw StructuralError("cannot downsample " + to_string(src) + " to " +
		                      to_string(target));
	}
	Frame out(target, frame.t_start, frame.t_end);
	for (int y = 0; y < src.height; ++y) {
		const int ty = static_cast<int>(
		    static_cast<std::int64_t>(y) * target.height / src.height);
		for (int x = 0; x < src.width; ++x) {
			const int tx = static_cast<int>(
			    static_cast<std::int64_t>(x) * target.width / src.width);
			out.cells(ty, tx) += frame.cells(y, x);
		}
	}
	return out;
}

DepthFrame::DepthFrame(Resolution res, double fill)
    : resolution(res), depth(GridD::Constant(res.height, res.width, fill))
{
}

bool DepthFrame::in_range(int x, int y, double near, double far) const
{
	const double d = depth(y, x);
	// NaN and non-positive depths are "no reading" and never in range.
	return d > 0.0 && d >= near && d <= far;
}

namespace {

void check_mask_args(Resolution res, const DepthFrame &depth, double near,
                     double far)
{
	if (!(res == depth.resolution)) {
		throw StructuralError("depth resolution " + to_string(depth.resolution) +
		                      " does not match " + to_string(res));
	}
	if (!(near >= 0.0 && near < far)) {
		throw ConfigError("depth range requires 0 <= near < far");
	}
}

}  // namespace

Frame depth_mask(const Frame &frame, const DepthFrame &depth, double near,
                 double far)
{
	check_mask_args(frame.resolution, depth, near, far);
	Frame out = frame;
	for (int y = 0; y < frame.resolution.height; ++y) {
		for (int x = 0; x < frame.resolution.width; ++x) {
			if (!depth.in_range(x, y, near, far)) {
				out.cells(y, x) = 0;
			}
		}
	}
	return out;
}

EventStream depth_mask(std::span<const Event> stream, Resolution resolution,
                       const DepthFrame &depth, double near, double far)
{
	check_mask_args(resolution, depth, near, far);
	EventStream out;
	out.reserve(stream.size());
	for (const auto &ev : stream) {
		if (!resolution.contains(ev.x, ev.y)) {
			throw StructuralError("out-of-bounds " + to_string(ev));
		}
		if (depth.in_range(ev.x, ev.y, near, far)) {
			out.push_back(ev);
		}
	}
	return out;
}

// ---------------------------------------------------------------------------
// Trajectories

void Trajectory::validate() const
{
	std::map<HandId, std::uint64_t> last;
	for (const auto &s : samples) {
		if (!std::isfinite(s.x) || !std::isfinite(s.y)) {
			throw StructuralError("non-finite trajectory sample");
		}
		auto it = last.find(s.hand);
		if (it != last.end() && s.t <= it->second) {
			throw StructuralError("trajectory timestamps must strictly increase "
			                      "per hand (t=" +
			                      std::to_string(s.t) + ")");
		}
		last[s.hand] = s.t;
	}
}

std::vector<TrajectorySample> Trajectory::samples_of(HandId hand) const
{
	std::vector<TrajectorySample> out;
	std::copy_if(samples.begin(), samples.end(), std::back_inserter(out),
	             [hand](const auto &s) { return s.hand == hand; });
	return out;
}

std::optional<Eigen::Vector2d> Trajectory::position_at(HandId hand,
                                                        std::uint64_t t) const
{
	const TrajectorySample *prev = nullptr;
	for (const auto &s : samples) {
		if (s.hand != hand) {
			continue;
		}
		if (s.t == t) {
			return Eigen::Vector2d(s.x, s.y);
		}
		if (s.t > t) {
			if (prev == nullptr) {
				return std::nullopt;
			}
			const double a = static_cast<double>(t - prev->t) /
			                 static_cast<double>(s.t - prev->t);
			return Eigen::Vector2d(prev->x + a * (s.x - prev->x),
			                       prev->y + a * (s.y - prev->y));
		}
		prev = &s;
	}
	return std::nullopt;
}

std::optional<std::pair<std::uint64_t, std::uint64_t>> Trajectory::span() const
{
	if (samples.empty()) {
		return std::nullopt;
	}
	std::uint64_t lo = samples.front().t, hi = samples.front().t;
	for (const auto &s : samples) {
		lo = std::min(lo, s.t);
		hi = std::max(hi, s.t);
	}
	return std::make_pair(lo, hi);
}

Trajectory make_waving_trajectory(const std::vector<WaveSpec> &hands,
                                  std::uint64_t duration_us,
                                  std::uint64_t sample_step_us)
{
	if (sample_step_us == 0) {
		throw ConfigError("sample step must be positive");
	}
	Trajectory traj;
	for (std::uint64_t t = 0; t <= duration_us; t += sample_step_us) {
		const double ts = static_cast<double>(t) * 1e-6;
		for (const auto &h : hands) {
			const double s =
			    std::sin(2.0 * std::numbers::pi * h.frequency_hz * ts + h.phase);
			traj.samples.push_back({t, h.hand, h.center.x() + h.amplitude.x() * s,
			                        h.center.y() + h.amplitude.y() * s});
		}
	}
	return traj;
}

Trajectory two_hand_wave(Resolution resolution, std::uint64_t duration_us)
{
	const double w = resolution.width, h = resolution.height;
	const Eigen::Vector2d amp(0.12 * w, 0.15 * h);
	return make_waving_trajectory(
	    {{HandId::Right, {0.3 * w, 0.5 * h}, amp, 0.5, 0.0},
	     {HandId::Left, {0.7 * w, 0.5 * h}, amp, 0.4, 1.3}},
	    duration_us);
}

Trajectory parse_trajectory(const std::string &text)
{
	Trajectory traj;
	std::istringstream in(text);
	std::string line;
	int lineno = 0;
	bool have_unit = false;
	while (std::getline(in, line)) {
		++lineno;
		if (auto hash = line.find('#'); hash != std::string::npos) {
			line.erase(hash);
		}
		std::istringstream ls(line);
		std::string first;
		if (!(ls >> first)) {
			continue;
		}
		auto fail = [&](const std::string &what) {
			return StructuralError("trajectory line " + std::to_string(lineno) +
			                       ": " + what);
		};
		if (first == "unit") {
			std::string unit;
			ls >> unit;
			if (unit == "pixels") {
				traj.unit = LengthUnit::Pixels;
			} else if (unit == "meters") {
				traj.unit = LengthUnit::Meters;
			} else {
				throw fail("unknown unit '" + unit + "'");
			}
			have_unit = true;
			continue;
		}
		TrajectorySample s;
		std::string hand;
		try {
			s.t = std::stoull(first);
		} catch (const std::exception &) {
			throw fail("bad timestamp '" + first + "'");
		}
		if (!(ls >> hand >> s.x >> s.y)) {
			throw fail("expected '<t_us> <left|right> <x> <y>'");
		}
		if (hand == "left") {
			s.hand = HandId::Left;
		} else if (hand == "right") {
			s.hand = HandId::Right;
		} else {
			throw fail("unknown hand '" + hand + "'");
		}
		traj.samples.push_back(s);
	}
	if (!have_unit && !traj.samples.empty()) {
		throw StructuralError("trajectory is missing its 'unit' line");
	}
	traj.validate();
	return traj;
}

std::string format_trajectory(const Trajectory &trajectory)
{
	std::ostringstream out;
	out.precision(17);
	out << "unit "
	    << (trajectory.unit == LengthUnit::Pixels ? "pixels" : "meters") << "\n";
	for (const auto &s : trajectory.samples) {
		out << s.t << ' ' << (s.hand == HandId::Left ? "left" : "right") << ' '
		    << s.x << ' ' << s.y << "\n";
	}
	return out.str();
}

// ---------------------------------------------------------------------------
// Synthetic events

double disk_intensity(double x, double y, double cx, double cy, double radius)
{
	const double dist = std::hypot(x - cx, y - cy);
	return std::clamp(radius + 0.5 - dist, 0.0, 1.0);
}

namespace {

struct Disk {
	double cx, cy;
};

std::vector<Disk> disks_at(const Trajectory &traj, std::uint64_t t,
                           double scale)
{
	std::vector<Disk> out;
	for (HandId hand : {HandId::Left, HandId::Right}) {
		if (auto p = traj.position_at(hand, t)) {
			out.push_back({p->x() * scale, p->y() * scale});
		}
	}
	return out;
}

double intensity(const std::vector<Disk> &disks, int x, int y, double radius)
{
	double v = 0.0;
	for (const auto &d : disks) {
		v = std::max(v, disk_intensity(x, y, d.cx, d.cy, radius));
	}
	return v;
}

}  // namespace

EventStream synth_hand_events(const Trajectory &trajectories,
                              const SynthParams &params, Resolution resolution,
                              std::uint64_t seed)
{
	resolution.validate();
	trajectories.validate();
	if (params.micro_step_us == 0 || !(params.contrast_threshold > 0.0) ||
	    !(params.blob_radius > 0.0) || params.rate_scale < 0.0) {
		throw ConfigError("invalid synthesis parameters");
	}
	EventStream out;
	const auto span = trajectories.span();
	if (!span || span->first == span->second) {
		return out;
	}
	const double scale = trajectories.unit == LengthUnit::Meters
	                         ? params.pixels_per_meter
	                         : 1.0;
	const double reach = params.blob_radius + 1.5;
	Rng rng(seed);
	Grid<std::int64_t> stamp =
	    Grid<std::int64_t>::Constant(resolution.height, resolution.width, -1);

	// Per-pixel reference level, moved by one threshold per emitted crossing.
	auto prev = disks_at(trajectories, span->first, scale);
	GridD ref = GridD::Zero(resolution.height, resolution.width);
	for (const auto &d : prev) {
		const int x0 = std::max(0, static_cast<int>(std::floor(d.cx - reach)));
		const int x1 = std::min(resolution.width - 1, static_cast<int>(std::ceil(d.cx + reach)));
		const int y0 = std::max(0, static_cast<int>(std::floor(d.cy - reach)));
		const int y1 = std::min(resolution.height - 1, static_cast<int>(std::ceil(d.cy + reach)));
		for (int y = y0; y <= y1; ++y) {
			for (int x = x0; x <= x1; ++x) {
				ref(y, x) = intensity(prev, x, y, params.blob_radius);
			}
		}
	}

	std::int64_t step = 0;
	for (std::uint64_t t = span->first + params.micro_step_us; t <= span->second;
	     t += params.micro_step_us, ++step) {
		const std::uint64_t t_prev = t - params.micro_step_us;
		auto cur = disks_at(trajectories, t, scale);

		std::vector<Disk> region = prev;
		region.insert(region.end(), cur.begin(), cur.end());
		for (const auto &d : region) {
			const int x0 = std::max(0, static_cast<int>(std::floor(d.cx - reach)));
			const int x1 = std::min(resolution.width - 1,
			                        static_cast<int>(std::ceil(d.cx + reach)));
			const int y0 = std::max(0, static_cast<int>(std::floor(d.cy - reach)));
			const int y1 = std::min(resolution.height - 1,
			                        static_cast<int>(std::ceil(d.cy + reach)));
			for (int y = y0; y <= y1; ++y) {
				for (int x = x0; x <= x1; ++x) {
					if (stamp(y, x) == step) {
						continue;
					}
					stamp(y, x) = step;
					const double delta = intensity(cur, x, y, params.blob_radius) - ref(y, x);
					const auto crossings = static_cast<std::int64_t>(
					    std::floor(std::abs(delta) / params.contrast_threshold + 1e-12));
					if (crossings == 0) {
						continue;
					}
					const double sign = delta > 0.0 ? 1.0 : -1.0;
					ref(y, x) += sign * static_cast<double>(crossings) * params.contrast_threshold;
					const double expected =
					    static_cast<double>(crossings) * params.rate_scale;
					auto n = static_cast<std::int64_t>(std::floor(expected));
					if (unit_uniform(rng) < expected - static_cast<double>(n)) {
						++n;
					}
					for (std::int64_t k = 0; k < n; ++k) {
						Event ev;
						ev.t = t_prev + uniform_index(rng, params.micro_step_us);
						ev.x = static_cast<std::uint16_t>(x);
						ev.y = static_cast<std::uint16_t>(y);
						ev.polarity = delta > 0.0 ? 1 : -1;
						out.push_back(ev);
					}
				}
			}
		}
		prev = std::move(cur);
	}
	std::stable_sort(out.begin(), out.end(),
	                 [](const Event &a, const Event &b) { return a.t < b.t; });
	return out;
}

EventStream inject_distractors(const EventStream &stream, double fraction,
                               Resolution resolution, std::uint64_t seed)
{
	resolution.validate();
	if (fraction < 0.0) {
		throw ConfigError("distractor fraction must be non-negative");
	}
	if (stream.empty() || fraction == 0.0) {
		return stream;
	}
	const std::uint64_t t0 = stream.front().t;
	const std::uint64_t t1 = stream.back().t;
	const auto count = static_cast<std::size_t>(
	    std::llround(fraction * static_cast<double>(stream.size())));
	Rng rng(seed);
	EventStream noise;
	noise.reserve(count);
	for (std::size_t i = 0; i < count; ++i) {
		Event ev;
		ev.t = t0 + uniform_index(rng, t1 - t0 + 1);
		ev.x = static_cast<std::uint16_t>(uniform_index(rng, resolution.width));
		ev.y = static_cast<std::uint16_t>(uniform_index(rng, resolution.height));
		ev.polarity = (rng() & 1u) ? 1 : -1;
		noise.push_back(ev);
	}
	std::stable_sort(noise.begin(), noise.end(),
	                 [](const Event &a, const Event &b) { return a.t < b.t; });
	EventStream out;
	out.reserve(stream.size() + noise.size());
	std::merge(stream.begin(), stream.end(), noise.begin(), noise.end(),
	           std::back_inserter(out),
	           [](const Event &a, const Event &b) { return a.t < b.t; });
	return out;
}

// ---------------------------------------------------------------------------
// EVT1 codec

Bytes encode_evt(const EventStream &stream, Resolution resolution)
{
	resolution.validate();
	Bytes out;
	out.reserve(kEvtHeaderBytes + kEvtRecordBytes * stream.size());
	for (char c : {'E', 'V', 'T', '1'}) {
		out.push_back(static_cast<std::uint8_t>(c));
	}
	le::put<std::uint16_t>(out, static_cast<std::uint16_t>(resolution.width));
	le::put<std::uint16_t>(out, static_cast<std::uint16_t>(resolution.height));
	le::put<std::uint32_t>(out, 0);
	for (const auto &ev : stream) {
		if (!resolution.contains(ev.x, ev.y) ||
		    (ev.polarity != 1 && ev.polarity != -1)) {
			throw StructuralError("cannot encode " + to_string(ev));
		}
		le::put<std::uint64_t>(out, ev.t);
		le::put<std::uint16_t>(out, ev.x);
		le::put<std::uint16_t>(out, ev.y);
		le::put<std::int8_t>(out, ev.polarity);
		out.insert(out.end(), 3, 0);
	}
	return out;
}

EventFile decode_evt(ByteView bytes)
{
	if (bytes.size() < kEvtHeaderBytes) {
		throw StructuralError("EVT1: truncated header");
	}
	if (!std::equal(bytes.begin(), bytes.begin() + 4, "EVT1")) {
		throw StructuralError("EVT1: bad magic");
	}
	EventFile file;
	file.resolution.width = le::get<std::uint16_t>(bytes, 4);
	file.resolution.height = le::get<std::uint16_t>(bytes, 6);
	file.resolution.validate();
	if (le::get<std::uint32_t>(bytes, 8) != 0) {
		throw StructuralError("EVT1: reserved header field is not zero");
	}
	const std::size_t body = bytes.size() - kEvtHeaderBytes;
	if (body % kEvtRecordBytes != 0) {
		throw StructuralError("EVT1: truncated record");
	}
	file.events.reserve(body / kEvtRecordBytes);
	for (std::size_t off = kEvtHeaderBytes; off < bytes.size();
	     off += kEvtRecordBytes) {
		Event ev;
		ev.t = le::get<std::uint64_t>(bytes, off);
		ev.x = le::get<std::uint16_t>(bytes, off + 8);
		ev.y = le::get<std::uint16_t>(bytes, off + 10);
		ev.polarity = le::get<std::int8_t>(bytes, off + 12);
		if (!file.resolution.contains(ev.x, ev.y)) {
			throw StructuralError("EVT1: out-of-bounds " + to_string(ev));
		}
		if (ev.polarity != 1 && ev.polarity != -1) {
			throw StructuralError("EVT1: bad polarity in " + to_string(ev));
		}
		if (bytes[off + 13] != 0 || bytes[off + 14] != 0 || bytes[off + 15] != 0) {
			throw StructuralError("EVT1: nonzero padding");
		}
		file.events.push_back(ev);
	}
	return file;
}

Bytes read_file_bytes(const std::filesystem::path &path)
{
	std::ifstream in(path, std::ios::binary);
	if (!in) {
		throw std::runtime_error("cannot open " + path.string());
	}
	return Bytes(std::istreambuf_iterator<char>(in),
	             std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path &path, ByteView bytes)
{
	std::ofstream out(path, std::ios::binary);
	if (!out) {
		throw std::runtime_error("cannot write " + path.string());
	}
	out.write(reinterpret_cast<const char *>(bytes.data()),
	          static_cast<std::streamsize>(bytes.size()));
}

void write_evt(const std::filesystem::path &path, const EventStream &stream,
               Resolution resolution)
{
	write_file_bytes(path, encode_evt(stream, resolution));
}

EventFile read_evt(const std::filesystem::path &path)
{
	return decode_evt(read_file_bytes(path));
}

}  // namespace neuroshow
