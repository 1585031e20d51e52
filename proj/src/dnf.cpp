#include <neuroshow/dnf.hpp>

#include <algorithm>
#include <cmath>
#include <string>

namespace neuroshow {

void FieldParams::validate() const
{
	if (!(tau > 0.0) || !(dt > 0.0) || !(dt <= tau) || !(h < 0.0) ||
	    !(beta > 0.0)) {
		throw ConfigError("field params require tau > 0, 0 < dt <= tau, h < 0, "
		                  "beta > 0");
	}
}

void KernelParams::validate() const
{
	if (!(sigma_exc > 0.0) || !(sigma_inh > sigma_exc) || !(c_exc >= 0.0) ||
	    !(c_inh >= 0.0) || !(g_inh >= 0.0)) {
		throw ConfigError("kernel params require sigma_inh > sigma_exc > 0 and "
		                  "non-negative amplitudes");
	}
}

LateralKernel LateralKernel::zero(int radius)
{
	LateralKernel k;
	k.radius = radius;
	k.weights = GridD::Zero(2 * radius + 1, 2 * radius + 1);
	return k;
}

namespace {

Eigen::VectorXd gaussian_profile(double sigma, int radius)
{
	Eigen::VectorXd g(2 * radius + 1);
	for (int i = -radius; i <= radius; ++i) {
		g[i + radius] = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
	}
	return g;
}

}  // namespace

LateralKernel make_kernel(const KernelParams &kp, int radius)
{
	kp.validate();
	if (radius < 0) {
		throw ConfigError("kernel radius must be non-negative");
	}
	LateralKernel k;
	k.radius = radius;
	k.g_inh = kp.g_inh;
	k.separable = true;
	k.c_exc = kp.c_exc;
	k.c_inh = kp.c_inh;
	k.exc_profile = gaussian_profile(kp.sigma_exc, radius);
	k.inh_profile = gaussian_profile(kp.sigma_inh, radius);
	// exp(-(x^2+y^2)/2s^2) = g(x) g(y), so the outer products are exact.
	k.weights = kp.c_exc * k.exc_profile * k.exc_profile.transpose() -
	            kp.c_inh * k.inh_profile * k.inh_profile.transpose();
	return k;
}

int default_kernel_radius(const KernelParams &kp)
{
	return static_cast<int>(std::ceil(3.0 * kp.sigma_inh));
}

Field Field::at_rest(Resolution res, const FieldParams &params)
{
	res.validate();
	params.validate();
	return Field{res, GridD::Constant(res.height, res.width, params.h), params};
}

double sigmoid(double u, double beta)
{
	return 1.0 / (1.0 + std::exp(-beta * u));
}

GridD lateral_input_direct(const GridD &rate, const LateralKernel &kernel)
{
	const Eigen::Index rows = rate.rows(), cols = rate.cols();
	const int r = kernel.radius;
	GridD out = GridD::Zero(rows, cols);
	for (Eigen::Index y = 0; y < rows; ++y) {
		for (Eigen::Index x = 0; x < cols; ++x) {
			const double f = rate(y, x);
			if (f == 0.0) {
				continue;
			}
			// Scatter: a symmetric kernel makes scatter and gather identical.
			const Eigen::Index y0 = std::max<Eigen::Index>(0, y - r);
			const Eigen::Index y1 = std::min<Eigen::Index>(rows - 1, y + r);
			const Eigen::Index x0 = std::max<Eigen::Index>(0, x - r);
			const Eigen::Index x1 = std::min<Eigen::Index>(cols - 1, x + r);
			out.block(y0, x0, y1 - y0 + 1, x1 - x0 + 1) +=
			    f * kernel.weights.block(y0 - y + r, x0 - x + r, y1 - y0 + 1,
			                             x1 - x0 + 1);
		}
	}
	return out;
}

namespace {

GridD convolve_rows(const GridD &in, const Eigen::VectorXd &profile, int r)
{
	const Eigen::Index rows = in.rows(), cols = in.cols();
	GridD out = GridD::Zero(rows, cols);
	for (Eigen::Index y = 0; y < rows; ++y) {
		for (Eigen::Index x = 0; x < cols; ++x) {
			double acc = 0.0;
			const Eigen::Index k0 = std::max<Eigen::Index>(-r, -x);
			const Eigen::Index k1 = std::min<Eigen::Index>(r, cols - 1 - x);
			for (Eigen::Index k = k0; k <= k1; ++k) {
				acc += profile[k + r] * in(y, x + k);
			}
			out(y, x) = acc;
		}
	}
	return out;
}

GridD separable_pass(const GridD &rate, const Eigen::VectorXd &profile, int r)
{
	const GridD horizontal = convolve_rows(rate, profile, r);
	const GridD transposed = horizontal.transpose();
	return convolve_rows(transposed, profile, r).transpose();
}

}  // namespace

GridD lateral_input(const GridD &rate, const LateralKernel &kernel)
{
	if (!kernel.separable) {
		return lateral_input_direct(rate, kernel);
	}
	GridD out = GridD::Zero(rate.rows(), rate.cols());
	if (kernel.c_exc != 0.0) {
		out += kernel.c_exc * separable_pass(rate, kernel.exc_profile, kernel.radius);
	}
	if (kernel.c_inh != 0.0) {
		out -= kernel.c_inh * separable_pass(rate, kernel.inh_profile, kernel.radius);
	}
	return out;
}

Field field_step(const Field &field, const GridD &input,
                 const LateralKernel &kernel)
{
	const auto &p = field.params;
	p.validate();
	if (input.rows() != field.u.rows() || input.cols() != field.u.cols()) {
		throw StructuralError("field_step: input is " + std::to_string(input.cols()) +
		                      "x" + std::to_string(input.rows()) + ", field is " +
		                      to_string(field.resolution));
	}
	if (kernel.weights.rows() != 2 * kernel.radius + 1) {
		throw StructuralError("field_step: malformed kernel");
	}
	const GridD rate =
	    field.u.unaryExpr([beta = p.beta](double v) { return sigmoid(v, beta); });
	GridD drive = input - field.u;
	drive.array() += p.h;
	drive += lateral_input(rate, kernel);
	if (kernel.g_inh > 0.0) {
		drive.array() -= kernel.g_inh * rate.sum();
		const double n = static_cast<double>(rate.size());
		for (Eigen::Index y = 0; y < drive.rows(); ++y) {
			for (Eigen::Index x = 0; x < drive.cols(); ++x) {
				drive(y, x) -= kTieBreakBias *
				               static_cast<double>(y * drive.cols() + x) / n;
			}
		}
	}
	Field next = field;
	next.u += (p.dt / p.tau) * drive;
	if (!next.u.allFinite()) {
		throw StructuralError("field_step: activation diverged");
	}
	return next;
}

std::vector<Peak> detect_peaks(const Field &field, double threshold,
                               double min_separation)
{
	if (!(threshold > field.params.h)) {
		throw ConfigError("peak threshold must exceed the resting level");
	}
	return detect_peaks(field.u, threshold, min_separation);
}

std::vector<Peak> detect_peaks(const GridD &u, double threshold,
                               double min_separation)
{
	const Eigen::Index rows = u.rows(), cols = u.cols();
	Grid<int> label = Grid<int>::Constant(rows, cols, -1);
	struct Acc {
		double wx = 0, wy = 0, w = 0, max = -1e300;
		int first = 0;
	};
	std::vector<Acc> regions;
	std::vector<std::pair<Eigen::Index, Eigen::Index>> stack;
	for (Eigen::Index y = 0; y < rows; ++y) {
		for (Eigen::Index x = 0; x < cols; ++x) {
			if (!(u(y, x) > threshold) || label(y, x) >= 0) {
				continue;
			}
			const int id = static_cast<int>(regions.size());
			Acc acc;
			acc.first = static_cast<int>(y * cols + x);
			label(y, x) = id;
			stack.push_back({y, x});
			while (!stack.empty()) {
				const auto [cy, cx] = stack.back();
				stack.pop_back();
				const double v = u(cy, cx);
				const double w = v - threshold;
				acc.wx += w * static_cast<double>(cx);
				acc.wy += w * static_cast<double>(cy);
				acc.w += w;
				acc.max = std::max(acc.max, v);
				const std::pair<Eigen::Index, Eigen::Index> nbrs[] = {
				    {cy - 1, cx}, {cy + 1, cx}, {cy, cx - 1}, {cy, cx + 1}};
				for (const auto &[ny, nx] : nbrs) {
					if (ny < 0 || nx < 0 || ny >= rows || nx >= cols) {
						continue;
					}
					if (label(ny, nx) < 0 && u(ny, nx) > threshold) {
						label(ny, nx) = id;
						stack.push_back({ny, nx});
					}
				}
			}
			regions.push_back(acc);
		}
	}

	auto centroid = [](const Acc &a) {
		return Eigen::Vector2d(a.wx / a.w, a.wy / a.w);
	};
	bool merged = true;
	while (merged && regions.size() > 1) {
		merged = false;
		for (std::size_t i = 0; i < regions.size() && !merged; ++i) {
			for (std::size_t j = i + 1; j < regions.size(); ++j) {
				if ((centroid(regions[i]) - centroid(regions[j])).norm() <
				    min_separation) {
					auto &a = regions[i];
					const auto &b = regions[j];
					a.wx += b.wx;
					a.wy += b.wy;
					a.w += b.w;
					a.max = std::max(a.max, b.max);
					a.first = std::min(a.first, b.first);
					regions.erase(regions.begin() + static_cast<std::ptrdiff_t>(j));
					merged = true;
					break;
				}
			}
		}
	}

	std::vector<Peak> peaks;
	for (const auto &a : regions) {
		if (!(a.w > 0.0)) {
			continue;
		}
		peaks.push_back({centroid(a), a.w, a.max, a.first});
	}
	std::stable_sort(peaks.begin(), peaks.end(), [](const Peak &a, const Peak &b) {
		return a.mass > b.mass;
	});
	return peaks;
}

Bytes grid_to_pgm16(const GridD &grid, double lo, double hi)
{
	const std::string header = "P5\n" + std::to_string(grid.cols()) + " " +
	                           std::to_string(grid.rows()) + "\n65535\n";
	Bytes out(header.begin(), header.end());
	out.reserve(out.size() + 2 * static_cast<std::size_t>(grid.size()));
	const double span = hi > lo ? hi - lo : 1.0;
	for (Eigen::Index y = 0; y < grid.rows(); ++y) {
		for (Eigen::Index x = 0; x < grid.cols(); ++x) {
			const double t = std::clamp((grid(y, x) - lo) / span, 0.0, 1.0);
			const auto v = static_cast<std::uint16_t>(std::lround(t * 65535.0));
			out.push_back(static_cast<std::uint8_t>(v >> 8));  // PGM is big-endian
			out.push_back(static_cast<std::uint8_t>(v & 0xFF));
		}
	}
	return out;
}

Bytes grid_to_pgm16(const GridD &grid)
{
	if (grid.size() == 0) {
		return grid_to_pgm16(grid, 0.0, 1.0);
	}
	return grid_to_pgm16(grid, grid.minCoeff(), grid.maxCoeff());
}

}  // namespace neuroshow
