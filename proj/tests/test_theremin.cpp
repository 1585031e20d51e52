#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include <neuroshow/theremin.hpp>

using namespace neuroshow;

namespace {

double et_oracle(int midi)
{
	return 440.0 * std::pow(2.0, (midi - 69) / 12.0);
}

HandEstimate estimate_at(const Trajectory &pixels, std::uint64_t t)
{
	HandEstimate est;
	est.t = t;
	if (auto p = pixels.position_at(HandId::Right, t)) {
		est.hands.push_back({HandLabel::Pitch, p->x(), p->y(), 1.0});
	}
	if (auto v = pixels.position_at(HandId::Left, t)) {
		est.hands.push_back({HandLabel::Volume, v->x(), v->y(), 1.0});
	}
	return est;
}

bool in_ramp(const Score &score, std::uint64_t t, const TrajectoryOptions &opts)
{
	const auto onsets = note_onsets(score, opts.tempo);
	for (std::size_t i = 1; i < score.notes.size(); ++i) {
		if (t >= onsets[i] && t <= onsets[i] + note_ramp_us(score, i, opts)) {
			return true;
		}
	}
	return false;
}

std::size_t note_at(const std::vector<std::uint64_t> &onsets, std::uint64_t t)
{
	std::size_t i = 0;
	while (i + 2 < onsets.size() && onsets[i + 1] <= t) {
		++i;
	}
	return i;
}

}  // namespace

TEST_CASE("equal temperament")
{
	CHECK(note_freq(69) == 440.0);
	CHECK(note_freq(60) == doctest::Approx(261.6256).epsilon(1e-6));
	CHECK(note_freq(72) == doctest::Approx(523.2511).epsilon(1e-6));
	CHECK(note_freq(72) == doctest::Approx(2.0 * note_freq(60)));
	for (int m = 0; m <= 127; ++m) {
		CHECK(note_freq(m) == doctest::Approx(et_oracle(m)).epsilon(1e-12));
	}
	CHECK_THROWS_AS(note_freq(-1), ConfigError);
	CHECK_THROWS_AS(note_freq(128), ConfigError);
	CHECK(cents_between(note_freq(61), note_freq(60)) == doctest::Approx(100.0));
}

TEST_CASE("distance to pitch law")
{
	const PitchCalibration cal;
	CHECK(pitch_from_distance(0.16, cal) == doctest::Approx(523.2511).epsilon(1e-6));
	CHECK(pitch_from_distance(cal.d_ref, cal) == cal.f_ref);
	double prev = std::numeric_limits<double>::infinity();
	for (double d = 0.0; d < 1.0; d += 0.01) {
		const double f = pitch_from_distance(d, cal);
		CHECK(f < prev);
		prev = f;
		CHECK(pitch_from_distance(d - cal.octave_dist, cal) ==
		      doctest::Approx(2.0 * f).epsilon(1e-12));
	}
	CHECK(distance_for_pitch(note_freq(72), cal) == doctest::Approx(0.16));
	CHECK_THROWS_AS(distance_for_pitch(20000.0, cal), ConfigError);
	PitchCalibration bad;
	bad.octave_dist = 0.0;
	CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("hands_to_control")
{
	const PitchCalibration cal;
	const VolumeRange vol;
	const AntennaGeometry geo;
	HandEstimate est;
	est.t = 42;
	est.hands.push_back({HandLabel::Pitch, geo.pitch_x_for(0.16), 90.0, 1.0});

	auto c = hands_to_control(est, cal, vol, geo);
	CHECK(c.t == 42);
	CHECK(c.freq == doctest::Approx(523.2511).epsilon(1e-6));
	CHECK(c.amp == 1.0);

	est.hands.push_back({HandLabel::Volume, 180.0, geo.volume_y_for(vol.h_min), 1.0});
	CHECK(hands_to_control(est, cal, vol, geo).amp == doctest::Approx(0.0).epsilon(1e-12));
	est.hands.back().y = geo.volume_y_for(0.5 * (vol.h_min + vol.h_max));
	CHECK(hands_to_control(est, cal, vol, geo).amp == doctest::Approx(0.5));
	est.hands.back().y = geo.volume_y_for(1.0);
	CHECK(hands_to_control(est, cal, vol, geo).amp == 1.0);

	HandEstimate only_volume;
	only_volume.hands.push_back({HandLabel::Volume, 180.0, 100.0, 1.0});
	CHECK_THROWS_AS(hands_to_control(only_volume, cal, vol, geo), StructuralError);
}

TEST_CASE("score_to_trajectory")
{
	const PitchCalibration cal;
	const VolumeRange vol;

	SUBCASE("single C4 note holds d_ref")
	{
		Score s;
		s.notes = {{60, 400}};
		auto tr = score_to_trajectory(s, cal, vol);
		CHECK(tr.unit == LengthUnit::Meters);
		for (std::uint64_t t = 0; t <= 400000; t += 10000) {
			CHECK(tr.position_at(HandId::Right, t)->x() == doctest::Approx(cal.d_ref));
		}
	}
	SUBCASE("volume envelope maps linearly onto height")
	{
		Score s;
		s.notes = {{60, 1000}};
		s.volumes = {{0, 0.0}, {1000, 1.0}};
		auto tr = score_to_trajectory(s, cal, vol);
		CHECK(tr.position_at(HandId::Left, 0)->y() == doctest::Approx(vol.h_min));
		CHECK(tr.position_at(HandId::Left, 500000)->y() ==
		      doctest::Approx(0.5 * (vol.h_min + vol.h_max)));
		CHECK(tr.position_at(HandId::Left, 1000000)->y() == doctest::Approx(vol.h_max));
	}
	SUBCASE("unreachable pitch is rejected")
	{
		Score s;
		s.notes = {{127, 100}};
		CHECK_THROWS_AS(score_to_trajectory(s, cal, vol), ConfigError);
	}
	SUBCASE("ramps are clamped to half a note")
	{
		Score s;
		s.notes = {{60, 100}, {62, 40}};
		TrajectoryOptions opts;
		CHECK(note_ramp_us(s, 0, opts) == 0);
		CHECK(note_ramp_us(s, 1, opts) == 20000);
		CHECK(note_onsets(s, 2.0) == std::vector<std::uint64_t>{0, 50000, 70000});
	}
}

TEST_CASE("score -> trajectory -> control round trip stays within one cent")
{
	const PitchCalibration cal;
	const VolumeRange vol;
	const AntennaGeometry geo;
	const Score scale = showcase_scale();
	REQUIRE(scale.notes.size() == 8);
	CHECK(scale.notes.front().midi == 60);
	CHECK(scale.notes.back().midi == 72);

	for (double tempo : {0.5, 1.0, 1.7}) {
		TrajectoryOptions opts;
		opts.tempo = tempo;
		const auto metric = score_to_trajectory(scale, cal, vol, opts);
		const auto pixels = trajectory_to_pixels(metric, geo);
		const auto onsets = note_onsets(scale, tempo);
		double worst = 0.0;
		for (std::uint64_t t = 0; t < onsets.back(); t += 1000) {
			if (in_ramp(scale, t, opts)) {
				continue;
			}
			const double f = hands_to_control(estimate_at(pixels, t), cal, vol, geo).freq;
			const double want = et_oracle(scale.notes[note_at(onsets, t)].midi);
			worst = std::max(worst, std::abs(cents_between(f, want)));
		}
		CHECK(worst <= 1.0);

		const auto controls = trajectory_to_controls(metric, cal, vol, 1000);
		for (const auto &c : controls) {
			if (c.t < onsets.back() && !in_ramp(scale, c.t, opts)) {
				CHECK(std::abs(cents_between(c.freq, et_oracle(scale.notes[note_at(onsets, c.t)].midi))) <= 1.0);
			}
		}
	}
}

TEST_CASE("calibrate_pitch")
{
	const PitchCalibration truth{0.37, note_freq(60), 0.21};
	auto sample = [&](double d) { return CalibrationSample{d, pitch_from_distance(d, truth)}; };

	SUBCASE("noiseless samples recover the model")
	{
		std::vector<CalibrationSample> s;
		for (double d = 0.1; d < 0.5; d += 0.05) {
			s.push_back(sample(d));
		}
		auto fit = calibrate_pitch(s);
		CHECK(std::abs(fit.d_ref - truth.d_ref) <= 1e-9 * truth.d_ref);
		CHECK(std::abs(fit.octave_dist - truth.octave_dist) <= 1e-9 * truth.octave_dist);
		CHECK(fit.f_ref == truth.f_ref);
		CHECK(calibration_residual(s, fit) < 1e-20);

		std::vector<CalibrationSample> again;
		for (const auto &x : s) {
			again.push_back({x.distance, pitch_from_distance(x.distance, fit)});
		}
		auto refit = calibrate_pitch(again);
		CHECK(refit.d_ref == doctest::Approx(fit.d_ref).epsilon(1e-12));
		CHECK(refit.octave_dist == doctest::Approx(fit.octave_dist).epsilon(1e-12));
	}
	SUBCASE("two points interpolate exactly")
	{
		std::vector<CalibrationSample> s{{0.2, 300.0}, {0.3, 250.0}};
		CHECK(calibration_residual(s, calibrate_pitch(s)) < 1e-24);
	}
	SUBCASE("noisy fit beats every grid candidate")
	{
		Rng rng(12);
		std::vector<CalibrationSample> s;
		for (int i = 0; i < 15; ++i) {
			const double d = 0.1 + 0.4 * unit_uniform(rng);
			const double cents = 40.0 * (unit_uniform(rng) - 0.5);
			s.push_back({d, pitch_from_distance(d, truth) * std::exp2(cents / 1200.0)});
		}
		const auto fit = calibrate_pitch(s);
		const double best = calibration_residual(s, fit);
		for (int i = 0; i < 100; ++i) {
			for (int j = 0; j < 100; ++j) {
				PitchCalibration cand{0.30 + 0.0015 * i, note_freq(60), 0.15 + 0.0012 * j};
				CHECK(best <= calibration_residual(s, cand) + 1e-15);
			}
		}
	}
	SUBCASE("degenerate input")
	{
		std::vector<CalibrationSample> one{{0.2, 300.0}, {0.2, 310.0}};
		CHECK_THROWS_AS(calibrate_pitch(one), StructuralError);
		std::vector<CalibrationSample> rising{{0.2, 300.0}, {0.3, 350.0}};
		CHECK_THROWS_AS(calibrate_pitch(rising), StructuralError);
	}
}

TEST_CASE("render_trace and WAV output")
{
	const std::vector<ControlPoint> tone{{0, 440.0, 1.0}, {1000000, 440.0, 1.0}};

	SUBCASE("one second at 8 kHz is 16000 data bytes")
	{
		auto pcm = render_trace(tone, 8000);
		CHECK(pcm.size() == 8000);
		Bytes wav = encode_wav(pcm, 8000);
		CHECK(wav.size() == kWavHeaderBytes + 16000);
		CHECK(std::string(wav.begin(), wav.begin() + 4) == "RIFF");
		CHECK(std::string(wav.begin() + 8, wav.begin() + 12) == "WAVE");
		CHECK(std::string(wav.begin() + 36, wav.begin() + 40) == "data");
		const std::uint32_t data_len = wav[40] | wav[41] << 8 | wav[42] << 16 |
		                               static_cast<std::uint32_t>(wav[43]) << 24;
		CHECK(data_len == 16000);
		CHECK((wav[22] | wav[23] << 8) == 1);   // mono
		CHECK((wav[34] | wav[35] << 8) == 16);  // bits per sample
	}
	SUBCASE("frequency from zero crossings")
	{
		auto pcm = render_trace(tone, 48000);
		int rising = 0;
		for (std::size_t i = 1; i < pcm.size(); ++i) {
			rising += pcm[i - 1] < 0 && pcm[i] >= 0;
		}
		CHECK(std::abs(rising - 440) <= 1);
	}
	SUBCASE("silence")
	{
		std::vector<ControlPoint> quiet{{0, 440.0, 0.0}, {500000, 880.0, 0.0}};
		for (auto s : render_trace(quiet, 16000)) {
			CHECK(s == 0);
		}
	}
	SUBCASE("zero-depth vibrato is the identity")
	{
		CHECK(render_trace(tone, 8000, Vibrato{0.0, 6.0}) == render_trace(tone, 8000));
		CHECK(render_trace(tone, 8000, Vibrato{50.0, 6.0}) != render_trace(tone, 8000));
	}
	SUBCASE("bad input")
	{
		CHECK_THROWS_AS(render_trace(tone, 4000), ConfigError);
		std::vector<ControlPoint> backwards{{10, 440.0, 1.0}, {5, 440.0, 1.0}};
		CHECK_THROWS_AS(render_trace(backwards, 8000), StructuralError);
	}
}

TEST_CASE("score text format")
{
	const std::string text =
	    "# scale fragment\n"
	    "NOTE 60 500\n"
	    "NOTE 64 250\n"
	    "VOL 0 0.5\n"
	    "VOL 600 1\n";
	Score s = parse_score(text);
	REQUIRE(s.notes.size() == 2);
	CHECK(s.notes[1] == Note{64, 250});
	CHECK(s.volumes[0].level == 0.5);
	CHECK(parse_score(format_score(s)) == s);
	CHECK(s.duration_us() == 750000);
	CHECK(parse_score(format_score(showcase_scale())) == showcase_scale());

	CHECK_THROWS(parse_score("NOTE 60 0\n"));
	CHECK_THROWS(parse_score("NOTE 200 10\n"));
	CHECK_THROWS(parse_score("VOL 10 0.5\nVOL 5 0.5\n"));
	CHECK_THROWS(parse_score("VOL 0 1.5\n"));
	CHECK_THROWS(parse_score("CHORD 60 64\n"));
}
