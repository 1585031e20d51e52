#include <neuroshow/theremin.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include <Eigen/Dense>

namespace neuroshow {

void Score::validate() const
{
	for (const Note &n : notes) {
		if (n.midi < 0 || n.midi > 127) {
			throw StructuralError("note midi " + std::to_string(n.midi) + " out of range");
		}
		if (n.duration_ms <= 0) {
			throw StructuralError("note duration must be positive");
		}
	}
	for (std::size_t i = 0; i < volumes.size(); ++i) {
		const VolumePoint &v = volumes[i];
		if (!std::isfinite(v.t_ms) || v.t_ms < 0.0 || !(v.level >= 0.0 && v.level <= 1.0)) {
			throw StructuralError("invalid volume point");
		}
		if (i > 0 && v.t_ms < volumes[i - 1].t_ms) {
			throw StructuralError("volume times must be non-decreasing");
		}
	}
}

std::uint64_t Score::duration_us(double tempo) const
{
	if (!(tempo > 0.0)) {
		throw ConfigError("tempo must be positive");
	}
	return note_onsets(*this, tempo).back();
}

Score parse_score(const std::string &text)
{
	Score score;
	std::istringstream in(text);
	std::string line;
	int lineno = 0;
	while (std::getline(in, line)) {
		++lineno;
		if (auto hash = line.find('#'); hash != std::string::npos) {
			line.erase(hash);
		}
		std::istringstream ls(line);
		std::string kind;
		if (!(ls >> kind)) {
			continue;
		}
		auto fail = [&](const std::string &what) {
			return StructuralError("score line " + std::to_string(lineno) + ": " + what);
		};
		if (kind == "NOTE") {
			Note n;
			if (!(ls >> n.midi >> n.duration_ms)) {
				throw fail("expected 'NOTE <midi> <duration_ms>'");
			}
			score.notes.push_back(n);
		} else if (kind == "VOL") {
			VolumePoint v;
			if (!(ls >> v.t_ms >> v.level)) {
				throw fail("expected 'VOL <t_ms> <level>'");
			}
			score.volumes.push_back(v);
		} else {
			throw fail("unknown directive '" + kind + "'");
		}
		std::string extra;
		if (ls >> extra) {
			throw fail("trailing text '" + extra + "'");
		}
	}
	score.validate();
	return score;
}

std::string format_score(const Score &score)
{
	std::ostringstream out;
	out.precision(17);
	for (const Note &n : score.notes) {
		out << "NOTE " << n.midi << ' ' << n.duration_ms << '\n';
	}
	for (const VolumePoint &v : score.volumes) {
		out << "VOL " << v.t_ms << ' ' << v.level << '\n';
	}
	return out.str();
}

Score showcase_scale(int duration_ms)
{
	Score score;
	for (int midi : {60, 62, 64, 65, 67, 69, 71, 72}) {
		score.notes.push_back({midi, duration_ms});
	}
	return score;
}

double note_freq(int midi)
{
	if (midi < 0 || midi > 127) {
		throw ConfigError("midi note " + std::to_string(midi) + " out of range");
	}
	return 440.0 * std::exp2((midi - 69) / 12.0);
}

double cents_between(double f, double ref)
{
	return 1200.0 * std::log2(f / ref);
}

void PitchCalibration::validate() const
{
	if (!(octave_dist > 0.0) || !(f_ref > 0.0) || !std::isfinite(d_ref) ||
	    !std::isfinite(octave_dist) || !std::isfinite(f_ref)) {
		throw ConfigError("pitch calibration needs s > 0 and f_ref > 0");
	}
}

void VolumeRange::validate() const
{
	if (!(h_max > h_min)) {
		throw ConfigError("volume range needs h_max > h_min");
	}
}

void AntennaGeometry::validate() const
{
	if (!(pixel_to_meter > 0.0)) {
		throw ConfigError("pixel_to_meter must be positive");
	}
}

double AntennaGeometry::pitch_distance(double x_px) const
{
	return pixel_to_meter * std::abs(x_px - pitch_antenna_x);
}

double AntennaGeometry::volume_height(double y_px) const
{
	return pixel_to_meter * (volume_antenna_y - y_px);
}

double AntennaGeometry::pitch_x_for(double distance_m) const
{
	return pitch_antenna_x + distance_m / pixel_to_meter;
}

double AntennaGeometry::volume_y_for(double height_m) const
{
	return volume_antenna_y - height_m / pixel_to_meter;
}

double pitch_from_distance(double d, const PitchCalibration &cal)
{
	return cal.f_ref * std::exp2((cal.d_ref - d) / cal.octave_dist);
}

double distance_for_pitch(double f, const PitchCalibration &cal)
{
	if (!(f > 0.0)) {
		throw ConfigError("frequency must be positive");
	}
	double d = cal.d_ref - cal.octave_dist * std::log2(f / cal.f_ref);
	if (d < 0.0) {
		throw ConfigError("frequency " + std::to_string(f) +
		                  " Hz is above the calibrated range");
	}
	return d;
}

double amp_from_height(double h, const VolumeRange &vol)
{
	return std::clamp((h - vol.h_min) / (vol.h_max - vol.h_min), 0.0, 1.0);
}

double height_for_amp(double level, const VolumeRange &vol)
{
	return vol.h_min + std::clamp(level, 0.0, 1.0) * (vol.h_max - vol.h_min);
}

ControlPoint control_from_metric(std::uint64_t t, double d_pitch,
                                 std::optional<double> h_volume,
                                 const PitchCalibration &cal, const VolumeRange &vol)
{
	return {t, pitch_from_distance(d_pitch, cal),
	        h_volume ? amp_from_height(*h_volume, vol) : 1.0};
}

ControlPoint hands_to_control(const HandEstimate &est, const PitchCalibration &cal,
                              const VolumeRange &vol, const AntennaGeometry &geometry)
{
	const HandPosition *pitch = est.find(HandLabel::Pitch);
	if (pitch == nullptr) {
		throw StructuralError("estimate has no pitch hand");
	}
	std::optional<double> h;
	if (const HandPosition *volume = est.find(HandLabel::Volume)) {
		h = geometry.volume_height(volume->y);
	}
	return control_from_metric(est.t, geometry.pitch_distance(pitch->x), h, cal, vol);
}

namespace {

std::uint64_t ms_to_us(double ms, double tempo)
{
	return static_cast<std::uint64_t>(std::llround(ms * 1000.0 / tempo));
}

}  // namespace

std::vector<std::uint64_t> note_onsets(const Score &score, double tempo)
{
	if (!(tempo > 0.0)) {
		throw ConfigError("tempo must be positive");
	}
	std::vector<std::uint64_t> onsets{0};
	for (const Note &n : score.notes) {
		onsets.push_back(onsets.back() +
		                 std::max<std::uint64_t>(ms_to_us(n.duration_ms, tempo), 2));
	}
	return onsets;
}

std::uint64_t note_ramp_us(const Score &score, std::size_t i, const TrajectoryOptions &opts)
{
	if (i == 0 || i >= score.notes.size()) {
		return 0;
	}
	const std::uint64_t dur =
	    std::max<std::uint64_t>(ms_to_us(score.notes[i].duration_ms, opts.tempo), 2);
	return std::clamp<std::uint64_t>(ms_to_us(opts.ramp_ms, opts.tempo), 1, dur / 2);
}

Trajectory score_to_trajectory(const Score &score, const PitchCalibration &cal,
                               const VolumeRange &vol, const TrajectoryOptions &opts)
{
	score.validate();
	cal.validate();
	vol.validate();
	if (!(opts.tempo > 0.0) || !(opts.ramp_ms >= 0.0)) {
		throw ConfigError("tempo must be positive and ramp non-negative");
	}
	Trajectory traj;
	traj.unit = LengthUnit::Meters;
	if (score.notes.empty()) {
		return traj;
	}

	const std::vector<std::uint64_t> onsets = note_onsets(score, opts.tempo);
	std::vector<TrajectorySample> pitch;
	double prev_d = 0.0;
	for (std::size_t i = 0; i < score.notes.size(); ++i) {
		const double d = distance_for_pitch(note_freq(score.notes[i].midi), cal);
		const std::uint64_t t = onsets[i];
		if (i == 0) {
			pitch.push_back({t, HandId::Right, d, 0.0});
		} else {
			pitch.push_back({t, HandId::Right, prev_d, 0.0});
			pitch.push_back({t + note_ramp_us(score, i, opts), HandId::Right, d, 0.0});
		}
		prev_d = d;
	}
	const std::uint64_t end = onsets.back();
	pitch.push_back({end, HandId::Right, prev_d, 0.0});

	std::vector<TrajectorySample> volume;
	if (score.volumes.empty()) {
		double h = height_for_amp(1.0, vol);
		volume.push_back({0, HandId::Left, 0.0, h});
		volume.push_back({end, HandId::Left, 0.0, h});
	} else {
		for (const VolumePoint &v : score.volumes) {
			std::uint64_t tv = ms_to_us(v.t_ms, opts.tempo);
			if (!volume.empty() && tv <= volume.back().t) {
				tv = volume.back().t + 1;
			}
			if (volume.empty() && tv > 0) {
				volume.push_back({0, HandId::Left, 0.0, height_for_amp(v.level, vol)});
			}
			volume.push_back({tv, HandId::Left, 0.0, height_for_amp(v.level, vol)});
		}
		if (volume.back().t < end) {
			volume.push_back({end, HandId::Left, 0.0, volume.back().y});
		}
	}

	traj.samples = std::move(pitch);
	traj.samples.insert(traj.samples.end(), volume.begin(), volume.end());
	std::stable_sort(traj.samples.begin(), traj.samples.end(),
	                 [](const TrajectorySample &a, const TrajectorySample &b) { return a.t < b.t; });
	return traj;
}

Trajectory trajectory_to_pixels(const Trajectory &metric, const AntennaGeometry &geometry)
{
	if (metric.unit != LengthUnit::Meters) {
		throw StructuralError("expected a metric trajectory");
	}
	geometry.validate();
	Trajectory px;
	px.unit = LengthUnit::Pixels;
	px.samples.reserve(metric.samples.size());
	for (TrajectorySample s : metric.samples) {
		if (s.hand == HandId::Right) {
			s.x = geometry.pitch_x_for(s.x);
			s.y = geometry.pitch_hand_y;
		} else {
			s.x = geometry.volume_hand_x;
			s.y = geometry.volume_y_for(s.y);
		}
		px.samples.push_back(s);
	}
	return px;
}

std::vector<ControlPoint> trajectory_to_controls(const Trajectory &metric,
                                                 const PitchCalibration &cal,
                                                 const VolumeRange &vol,
                                                 std::uint64_t step_us)
{
	if (metric.unit != LengthUnit::Meters) {
		throw StructuralError("expected a metric trajectory");
	}
	if (step_us == 0) {
		throw ConfigError("control step must be positive");
	}
	std::vector<ControlPoint> out;
	auto span = metric.span();
	if (!span) {
		return out;
	}
	auto pitch = metric.samples_of(HandId::Right);
	auto volume = metric.samples_of(HandId::Left);
	std::size_t ip = 0;
	std::size_t iv = 0;
	auto interp = [](const std::vector<TrajectorySample> &s, std::size_t &i, std::uint64_t t,
	                 bool use_x) -> std::optional<double> {
		if (s.empty() || t < s.front().t || t > s.back().t) {
			return std::nullopt;
		}
		while (i + 1 < s.size() && s[i + 1].t <= t) {
			++i;
		}
		double a = use_x ? s[i].x : s[i].y;
		if (i + 1 == s.size() || s[i].t == t) {
			return a;
		}
		double b = use_x ? s[i + 1].x : s[i + 1].y;
		double w = static_cast<double>(t - s[i].t) / static_cast<double>(s[i + 1].t - s[i].t);
		return a + w * (b - a);
	};
	for (std::uint64_t t = span->first; t <= span->second; t += step_us) {
		auto d = interp(pitch, ip, t, true);
		if (!d) {
			continue;
		}
		out.push_back(control_from_metric(t, *d, interp(volume, iv, t, false), cal, vol));
	}
	return out;
}

PitchCalibration calibrate_pitch(std::span<const CalibrationSample> samples, double f_ref)
{
	if (!(f_ref > 0.0)) {
		throw ConfigError("f_ref must be positive");
	}
	std::set<double> distinct;
	for (const CalibrationSample &s : samples) {
		if (!(s.freq > 0.0) || !std::isfinite(s.distance)) {
			throw StructuralError("calibration sample needs finite distance and f > 0");
		}
		distinct.insert(s.distance);
	}
	if (distinct.size() < 2) {
		throw StructuralError("calibration is underdetermined: need two distinct distances");
	}
	// log2 f = a + b d, with b = -1/s and a = log2 f_ref + d_ref/s.
	const auto n = static_cast<Eigen::Index>(samples.size());
	Eigen::MatrixXd A(n, 2);
	Eigen::VectorXd y(n);
	for (Eigen::Index i = 0; i < n; ++i) {
		A(i, 0) = 1.0;
		A(i, 1) = samples[static_cast<std::size_t>(i)].distance;
		y(i) = std::log2(samples[static_cast<std::size_t>(i)].freq);
	}
	Eigen::Vector2d ab = A.colPivHouseholderQr().solve(y);
	if (!(ab(1) < 0.0)) {
		throw StructuralError("calibration data is not decreasing in distance");
	}
	PitchCalibration cal;
	cal.f_ref = f_ref;
	cal.octave_dist = -1.0 / ab(1);
	cal.d_ref = (ab(0) - std::log2(f_ref)) * cal.octave_dist;
	return cal;
}

double calibration_residual(std::span<const CalibrationSample> samples,
                            const PitchCalibration &cal)
{
	double sum = 0.0;
	for (const CalibrationSample &s : samples) {
		double r = std::log2(s.freq) - std::log2(pitch_from_distance(s.distance, cal));
		sum += r * r;
	}
	return sum;
}

std::vector<std::int16_t> render_trace(std::span<const ControlPoint> points,
                                       int sample_rate, std::optional<Vibrato> vibrato)
{
	if (sample_rate < 8000) {
		throw ConfigError("sample rate must be at least 8000");
	}
	std::vector<std::int16_t> pcm;
	if (points.size() < 2) {
		return pcm;
	}
	for (std::size_t i = 1; i < points.size(); ++i) {
		if (points[i].t < points[i - 1].t) {
			throw StructuralError("control points must be time-ordered");
		}
	}
	const double t0 = static_cast<double>(points.front().t);
	const double span_us = static_cast<double>(points.back().t) - t0;
	const auto count = static_cast<std::size_t>(std::llround(span_us * sample_rate / 1e6));
	pcm.reserve(count);

	constexpr double two_pi = 2.0 * std::numbers::pi;
	double phase = 0.0;
	std::size_t seg = 0;
	for (std::size_t n = 0; n < count; ++n) {
		const double rel_s = static_cast<double>(n) / sample_rate;
		const double t = t0 + rel_s * 1e6;
		while (seg + 2 < points.size() && static_cast<double>(points[seg + 1].t) <= t) {
			++seg;
		}
		const ControlPoint &a = points[seg];
		const ControlPoint &b = points[seg + 1];
		double w = b.t > a.t ? (t - static_cast<double>(a.t)) / static_cast<double>(b.t - a.t)
		                     : 1.0;
		w = std::clamp(w, 0.0, 1.0);
		double freq = a.freq + w * (b.freq - a.freq);
		double amp = std::clamp(a.amp + w * (b.amp - a.amp), 0.0, 1.0);
		if (vibrato) {
			freq *= std::exp2(vibrato->depth_cents / 1200.0 *
			                  std::sin(two_pi * vibrato->rate_hz * rel_s));
		}
		pcm.push_back(static_cast<std::int16_t>(std::lround(32767.0 * amp * std::sin(phase))));
		phase = std::fmod(phase + two_pi * freq / sample_rate, two_pi);
	}
	return pcm;
}

Bytes encode_wav(std::span<const std::int16_t> samples, int sample_rate)
{
	if (sample_rate <= 0) {
		throw ConfigError("sample rate must be positive");
	}
	const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
	Bytes out;
	out.reserve(kWavHeaderBytes + data_bytes);
	auto tag = [&](const char *s) { out.insert(out.end(), s, s + 4); };
	tag("RIFF");
	le::put<std::uint32_t>(out, 36 + data_bytes);
	tag("WAVE");
	tag("fmt ");
	le::put<std::uint32_t>(out, 16);
	le::put<std::uint16_t>(out, 1);  // PCM
	le::put<std::uint16_t>(out, 1);  // mono
	le::put<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate));
	le::put<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate) * 2);
	le::put<std::uint16_t>(out, 2);
	le::put<std::uint16_t>(out, 16);
	tag("data");
	le::put<std::uint32_t>(out, data_bytes);
	for (std::int16_t s : samples) {
		le::put<std::int16_t>(out, s);
	}
	return out;
}

}  // namespace neuroshow
