#ifndef NEUROSHOW_DNF_HPP
#define NEUROSHOW_DNF_HPP

#include <vector>

#include <Eigen/Core>

#include <neuroshow/common.hpp>
#include <neuroshow/event_core.hpp>

namespace neuroshow {

/// Time scale and resting level of the field dynamics.
struct FieldParams {
	double tau = 10.0;
	double h = -5.0;
	double beta = 4.0;
	double dt = 1.0;

	void validate() const;
};

/// Difference-of-Gaussians lateral interaction plus uniform global inhibition.
struct KernelParams {
	double c_exc = 1.0;
	double sigma_exc = 3.0;
	double c_inh = 0.5;
	double sigma_inh = 6.0;
	double g_inh = 0.0;

	void validate() const;

	/// Several peaks may coexist (g_inh = 0). Peaks outlive a weakened input
	/// but decay once it is gone.
	static KernelParams tracking() { return {}; }
	/// Stronger self-excitation plus global inhibition lets a single peak win.
	static KernelParams selective()
	{
		KernelParams kp;
		kp.c_exc = 2.0;
		kp.c_inh = 1.0;
		kp.g_inh = 0.8;
		return kp;
	}
};

/**
 * Sampled interaction kernel on a (2r+1)x(2r+1) support. Kernels built by
 * make_kernel also keep their 1D Gaussian factors, which lets field_step use
 * two separable passes instead of the direct 2D sum; both paths produce the
 * same values.
 */
struct LateralKernel {
	int radius = 0;
	GridD weights;
	double g_inh = 0.0;

	bool separable = false;
	double c_exc = 0.0;
	double c_inh = 0.0;
	Eigen::VectorXd exc_profile;
	Eigen::VectorXd inh_profile;

	double at(int dx, int dy) const { return weights(dy + radius, dx + radius); }

	/// Kernel that is identically zero (no lateral interaction).
	static LateralKernel zero(int radius = 0);
};

LateralKernel make_kernel(const KernelParams &kp, int radius);

/// Radius covering three inhibitory widths.
int default_kernel_radius(const KernelParams &kp);

struct Field {
	Resolution resolution;
	GridD u;
	FieldParams params;

	/// Field at its resting level h everywhere.
	static Field at_rest(Resolution res, const FieldParams &params = {});
};

double sigmoid(double u, double beta);

/// Lateral input sum_k kernel(k) * f(u(x - k)) with zero padding.
GridD lateral_input(const GridD &rate, const LateralKernel &kernel);
/// Same as lateral_input, but always via the direct 2D sum.
GridD lateral_input_direct(const GridD &rate, const LateralKernel &kernel);

/**
 * One Euler step of
 *   tau du/dt = -u + h + s + (k * f(u)) - g_inh * sum f(u)
 * with f the logistic rate function. When g_inh > 0, a scan-order bias of at
 * most 1e-6 (row-major earlier cells favored) is added to s so that exactly
 * tied competitors resolve deterministically.
 */
Field field_step(const Field &field, const GridD &input,
                 const LateralKernel &kernel);

inline constexpr double kTieBreakBias = 1e-6;

struct Peak {
	Eigen::Vector2d centroid = Eigen::Vector2d::Zero();  ///< (x, y) in cells
	double mass = 0.0;            ///< sum of (u - threshold) over the region
	double max_activation = 0.0;
	int first_cell = 0;           ///< row-major index of the region's first cell
};

/**
 * Connected (4-neighbour) regions with u > threshold, weighted by
 * u - threshold. Regions whose centroids lie closer than min_separation are
 * merged. Sorted by mass, descending; equal masses keep scan order.
 */
std::vector<Peak> detect_peaks(const Field &field, double threshold,
                               double min_separation);
std::vector<Peak> detect_peaks(const GridD &u, double threshold,
                               double min_separation);

/// 16-bit binary PGM (P5) of a grid, linearly scaled from [lo, hi].
Bytes grid_to_pgm16(const GridD &grid, double lo, double hi);
Bytes grid_to_pgm16(const GridD &grid);

}  // namespace neuroshow

#endif  // NEUROSHOW_DNF_HPP
