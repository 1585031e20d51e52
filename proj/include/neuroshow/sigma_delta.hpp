#ifndef NEUROSHOW_SIGMA_DELTA_HPP
#define NEUROSHOW_SIGMA_DELTA_HPP

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <neuroshow/common.hpp>

namespace neuroshow {

/**
 * A spike carrying a signed magnitude. The address indexes the sending
 * population; zero-valued spikes are never produced.
 */
template <typename Scalar>
struct GradedSpike {
	std::uint32_t address = 0;
	Scalar value = 0;

	friend bool operator==(const GradedSpike &, const GradedSpike &) = default;
};

/**
 * Delta-encoder state for one population: the activation most recently
 * transmitted for each neuron. Starts at zero.
 */
template <typename Scalar>
class SdState {
public:
	using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

	explicit SdState(Eigen::Index size) : m_last_sent(Vector::Zero(size)) {}

	Eigen::Index size() const { return m_last_sent.size(); }
	const Vector &last_sent() const { return m_last_sent; }

	/**
	 * Emits one spike per neuron whose activation moved at least `threshold`
	 * away from the last transmitted value (any change when threshold is
	 * zero). The spike carries the full residual and the state snaps to the
	 * new activation.
	 */
	std::vector<GradedSpike<Scalar>> encode(const Eigen::Ref<const Vector> &activations,
	                                        Scalar threshold)
	{
		if (activations.size() != size()) {
			throw StructuralError("delta_encode: expected " + std::to_string(size()) +
			                      " activations, got " +
			                      std::to_string(activations.size()));
		}
		if (!(threshold >= Scalar(0))) {
			throw ConfigError("delta_encode: threshold must be >= 0");
		}
		std::vector<GradedSpike<Scalar>> spikes;
		for (Eigen::Index i = 0; i < activations.size(); ++i) {
			const Scalar d = activations[i] - m_last_sent[i];
			const bool fire = threshold > Scalar(0) ? std::abs(d) >= threshold
			                                        : d != Scalar(0);
			if (fire) {
				spikes.push_back({static_cast<std::uint32_t>(i), d});
				m_last_sent[i] = activations[i];
			}
		}
		return spikes;
	}

private:
	Vector m_last_sent;
};

template <typename Scalar>
std::vector<GradedSpike<Scalar>> delta_encode(
    SdState<Scalar> &state,
    const Eigen::Ref<const typename SdState<Scalar>::Vector> &activations,
    std::type_identity_t<Scalar> threshold)
{
	return state.encode(activations, threshold);
}

/// Adds each spike's value into the accumulator at its address.
template <typename Scalar>
void sigma_decode(Eigen::Matrix<Scalar, Eigen::Dynamic, 1> &accumulator,
                  std::span<const GradedSpike<std::type_identity_t<Scalar>>> spikes)
{
	for (const auto &s : spikes) {
		if (s.address >= static_cast<std::uint64_t>(accumulator.size())) {
			throw StructuralError("sigma_decode: address " +
			                      std::to_string(s.address) + " out of range " +
			                      std::to_string(accumulator.size()));
		}
	}
	for (const auto &s : spikes) {
		accumulator[s.address] += s.value;
	}
}

enum class Activation { Relu, Identity };

template <typename Scalar>
struct DenseLayer {
	using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
	using Sparse = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;
	using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

	/// Convolutions are carried as sparse matrices on the same forwarding path.
	std::variant<Matrix, Sparse> weights;
	Vector bias;
	Activation activation = Activation::Identity;

	Eigen::Index rows() const
	{
		return std::visit([](const auto &w) { return Eigen::Index(w.rows()); },
		                  weights);
	}
	Eigen::Index cols() const
	{
		return std::visit([](const auto &w) { return Eigen::Index(w.cols()); },
		                  weights);
	}

	Vector apply(const Vector &x) const
	{
		Vector z = std::visit([&](const auto &w) -> Vector { return w * x; },
		                      weights);
		z += bias;
		if (activation == Activation::Relu) {
			z = z.cwiseMax(Scalar(0));
		}
		return z;
	}

	/// Largest absolute row sum.
	Scalar inf_norm() const
	{
		return std::visit(
		    [](const auto &w) -> Scalar {
			    if constexpr (std::is_same_v<std::decay_t<decltype(w)>, Matrix>) {
				    return w.rows() == 0 ? Scalar(0)
				                         : w.cwiseAbs().rowwise().sum().maxCoeff();
			    } else {
				    Scalar best(0);
				    for (Eigen::Index r = 0; r < w.outerSize(); ++r) {
					    Scalar row(0);
					    for (typename Sparse::InnerIterator it(w, r); it; ++it) {
						    row += std::abs(it.value());
					    }
					    best = std::max(best, row);
				    }
				    return best;
			    }
		    },
		    weights);
	}
};

template <typename Scalar>
struct DenseNet {
	using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

	std::vector<DenseLayer<Scalar>> layers;

	Eigen::Index input_size() const { return layers.empty() ? 0 : layers.front().cols(); }
	Eigen::Index output_size() const { return layers.empty() ? 0 : layers.back().rows(); }

	void validate() const
	{
		if (layers.empty()) {
			throw StructuralError("network has no layers");
		}
		for (std::size_t i = 0; i < layers.size(); ++i) {
			const auto &l = layers[i];
			if (l.bias.size() != l.rows()) {
				throw StructuralError("layer " + std::to_string(i) +
				                      ": bias size does not match weight rows");
			}
			if (i > 0 && l.cols() != layers[i - 1].rows()) {
				throw StructuralError("layer " + std::to_string(i) +
				                      ": input size does not match previous layer");
			}
			const bool finite = std::visit(
			    [](const auto &w) {
				    if constexpr (std::is_same_v<std::decay_t<decltype(w)>,
				                                 typename DenseLayer<Scalar>::Matrix>) {
					    return w.allFinite();
				    } else {
					    for (Eigen::Index k = 0; k < w.nonZeros(); ++k) {
						    if (!std::isfinite(w.valuePtr()[k])) {
							    return false;
						    }
					    }
					    return true;
				    }
			    },
			    l.weights);
			if (!finite || !l.bias.allFinite()) {
				throw StructuralError("layer " + std::to_string(i) +
				                      ": non-finite parameters");
			}
		}
	}
};

/// Conventional (non-spiking) forward pass; the reference for sd_forward.
template <typename Scalar>
typename DenseNet<Scalar>::Vector dense_forward(
    const DenseNet<Scalar> &net, const typename DenseNet<Scalar>::Vector &input)
{
	net.validate();
	if (input.size() != net.input_size()) {
		throw StructuralError("dense_forward: input dimension mismatch");
	}
	typename DenseNet<Scalar>::Vector x = input;
	for (const auto &l : net.layers) {
		x = l.apply(x);
	}
	return x;
}

/**
 * Stateful sigma-delta execution of a DenseNet. Each layer's output passes
 * through a delta encoder; the next layer (or the caller, for the last layer)
 * sees only the sigma-decoded reconstruction. The first layer reads its input
 * directly.
 */
template <typename Scalar>
class SdRunner {
public:
	using Vector = typename DenseNet<Scalar>::Vector;

	SdRunner(DenseNet<Scalar> net, Scalar threshold)
	    : m_net(std::move(net)), m_threshold(threshold)
	{
		m_net.validate();
		if (!(threshold >= Scalar(0))) {
			throw ConfigError("sigma-delta threshold must be >= 0");
		}
		for (const auto &l : m_net.layers) {
			m_encoders.emplace_back(l.rows());
			m_decoded.push_back(Vector::Zero(l.rows()));
		}
		m_spikes.assign(m_net.layers.size(), 0);
	}

	const Vector &step(const Vector &input)
	{
		if (input.size() != m_net.input_size()) {
			throw StructuralError("sd_forward: input dimension " +
			                      std::to_string(input.size()) + " != " +
			                      std::to_string(m_net.input_size()));
		}
		const Vector *x = &input;
		for (std::size_t i = 0; i < m_net.layers.size(); ++i) {
			const Vector a = m_net.layers[i].apply(*x);
			const auto spikes = m_encoders[i].encode(a, m_threshold);
			m_spikes[i] += spikes.size();
			sigma_decode(m_decoded[i], spikes);
			x = &m_decoded[i];
		}
		return m_decoded.back();
	}

	const DenseNet<Scalar> &net() const { return m_net; }
	Scalar threshold() const { return m_threshold; }
	/// Total spikes emitted at each layer's output boundary so far.
	const std::vector<std::uint64_t> &spike_counts() const { return m_spikes; }
	const SdState<Scalar> &encoder(std::size_t layer) const { return m_encoders.at(layer); }
	const Vector &decoded(std::size_t layer) const { return m_decoded.at(layer); }

private:
	DenseNet<Scalar> m_net;
	Scalar m_threshold;
	std::vector<SdState<Scalar>> m_encoders;
	std::vector<Vector> m_decoded;
	std::vector<std::uint64_t> m_spikes;
};

template <typename Scalar>
struct SdForwardResult {
	std::vector<typename DenseNet<Scalar>::Vector> outputs;
	std::vector<std::uint64_t> spike_counts;
};

template <typename Scalar>
SdForwardResult<Scalar> sd_forward(
    const DenseNet<Scalar> &net,
    std::span<const typename DenseNet<Scalar>::Vector> inputs, Scalar threshold)
{
	SdRunner<Scalar> runner(net, threshold);
	SdForwardResult<Scalar> result;
	result.outputs.reserve(inputs.size());
	for (const auto &x : inputs) {
		result.outputs.push_back(runner.step(x));
	}
	result.spike_counts = runner.spike_counts();
	return result;
}

/**
 * Text weight format, shared with the tracker's detector loader:
 *
 *     layers <n>
 *     layer <rows> <cols> <relu|identity>
 *     <rows lines of cols values, row-major>
 *     <one line of rows bias values>
 *     ...
 *
 * Dense layers only; sparse weights are densified on write.
 */
DenseNet<double> read_dense_net(std::istream &in);
void write_dense_net(std::ostream &out, const DenseNet<double> &net);

}  // namespace neuroshow

#endif  // NEUROSHOW_SIGMA_DELTA_HPP
