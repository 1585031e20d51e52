#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include <neuroshow/sigma_delta.hpp>

using namespace neuroshow;
using Vec = Eigen::VectorXd;

namespace {

DenseNet<double> random_net(Rng &rng, int in, int hidden, int out)
{
	auto mat = [&](int r, int c) {
		Eigen::MatrixXd m(r, c);
		for (int i = 0; i < r; ++i) {
			for (int j = 0; j < c; ++j) {
				m(i, j) = 2.0 * unit_uniform(rng) - 1.0;
			}
		}
		return m;
	};
	auto vec = [&](int n) {
		Vec v(n);
		for (int i = 0; i < n; ++i) {
			v[i] = 0.2 * unit_uniform(rng) - 0.1;
		}
		return v;
	};
	DenseNet<double> net;
	net.layers.push_back({mat(hidden, in), vec(hidden), Activation::Relu});
	net.layers.push_back({mat(out, hidden), vec(out), Activation::Identity});
	return net;
}

std::vector<Vec> random_inputs(Rng &rng, int n, int dim)
{
	std::vector<Vec> xs;
	for (int t = 0; t < n; ++t) {
		Vec x(dim);
		for (int i = 0; i < dim; ++i) {
			x[i] = 4.0 * unit_uniform(rng) - 2.0;
		}
		xs.push_back(x);
	}
	return xs;
}

}  // namespace

TEST_CASE("delta_encode follows the threshold rule step by step")
{
	SdState<double> st(1);
	Vec acc = Vec::Zero(1);
	const double theta = 0.5;
	std::vector<std::size_t> counts;
	for (double a : {0.0, 0.3, 0.9, 1.0}) {
		Vec v(1);
		v << a;
		auto spikes = delta_encode(st, v, theta);
		counts.push_back(spikes.size());
		sigma_decode<double>(acc, spikes);
		if (a == 0.9) {
			REQUIRE(spikes.size() == 1);
			CHECK(spikes[0].value == doctest::Approx(0.9));
		}
	}
	CHECK(counts == std::vector<std::size_t>{0, 0, 1, 0});
	CHECK(acc[0] == doctest::Approx(0.9));
	CHECK(std::abs(1.0 - acc[0]) < theta);
}

TEST_CASE("zero threshold sends every change exactly")
{
	SdState<double> st(3);
	Vec acc = Vec::Zero(3);
	Rng rng(4);
	Vec prev = Vec::Zero(3);
	for (int t = 0; t < 20; ++t) {
		Vec a(3);
		a << unit_uniform(rng), unit_uniform(rng) - 0.5, 3.0 * unit_uniform(rng);
		auto spikes = delta_encode(st, a, 0.0);
		CHECK(spikes.size() == 3);
		for (const auto &s : spikes) {
			CHECK(s.value == a[s.address] - prev[s.address]);
		}
		sigma_decode<double>(acc, spikes);
		CHECK((acc - a).cwiseAbs().maxCoeff() < 1e-12);
		prev = a;
	}
}

TEST_CASE("constant activations stay silent and empty spike lists change nothing")
{
	SdState<double> st(4);
	Vec a = Vec::Constant(4, 1.25);
	CHECK(delta_encode(st, a, 0.1).size() == 4);
	for (int t = 0; t < 50; ++t) {
		CHECK(delta_encode(st, a, 0.1).empty());
	}
	Vec acc = Vec::LinSpaced(4, 0.0, 3.0);
	const Vec before = acc;
	sigma_decode<double>(acc, std::vector<GradedSpike<double>>{});
	CHECK(acc == before);
}

TEST_CASE("encoder and decoder reject bad input")
{
	SdState<double> st(2);
	CHECK_THROWS_AS(delta_encode(st, Vec::Zero(3), 0.1), StructuralError);
	CHECK_THROWS_AS(delta_encode(st, Vec::Zero(2), -0.1), ConfigError);
	Vec acc = Vec::Zero(2);
	std::vector<GradedSpike<double>> bad{{0, 1.0}, {2, 1.0}};
	CHECK_THROWS_AS(sigma_decode<double>(acc, bad), StructuralError);
	CHECK(acc == Vec::Zero(2));
}

TEST_CASE("float scalar instantiation")
{
	SdState<float> st(2);
	Eigen::VectorXf acc = Eigen::VectorXf::Zero(2);
	Eigen::VectorXf a(2);
	a << 0.75f, -0.25f;
	auto spikes = delta_encode(st, a, 0.5f);
	sigma_decode<float>(acc, spikes);
	CHECK(spikes.size() == 1);
	CHECK(acc[0] == 0.75f);
}

TEST_CASE("sd_forward at zero threshold equals the dense reference")
{
	Rng rng(17);
	for (int trial = 0; trial < 20; ++trial) {
		auto net = random_net(rng, 6, 10, 4);
		auto xs = random_inputs(rng, 30, 6);
		auto res = sd_forward<double>(net, xs, 0.0);
		for (std::size_t t = 0; t < xs.size(); ++t) {
			const Vec ref = dense_forward(net, xs[t]);
			const double scale = std::max(1.0, ref.cwiseAbs().maxCoeff());
			CHECK((res.outputs[t] - ref).cwiseAbs().maxCoeff() <= 1e-9 * scale);
		}
	}
}

TEST_CASE("single identity layer keeps the reconstruction within threshold")
{
	DenseNet<double> net;
	net.layers.push_back({Eigen::MatrixXd::Identity(1, 1), Vec::Zero(1), Activation::Identity});
	std::vector<Vec> xs;
	for (int t = 0; t < 10; ++t) {
		xs.push_back(Vec::Constant(1, t < 3 ? 0.0 : 1.0));
	}
	auto res = sd_forward<double>(net, xs, 0.5);
	for (std::size_t t = 0; t < xs.size(); ++t) {
		CHECK(std::abs(res.outputs[t][0] - xs[t][0]) <= 0.5);
	}
}

TEST_CASE("two-layer error stays within theta * (|W2|_inf + 1)")
{
	Rng rng(99);
	for (double theta : {0.05, 0.2, 0.7}) {
		for (int trial = 0; trial < 10; ++trial) {
			auto net = random_net(rng, 5, 8, 3);
			auto xs = random_inputs(rng, 60, 5);
			auto res = sd_forward<double>(net, xs, theta);
			const double bound = theta * (net.layers[1].inf_norm() + 1.0);
			for (std::size_t t = 0; t < xs.size(); ++t) {
				const Vec ref = dense_forward(net, xs[t]);
				CHECK((res.outputs[t] - ref).cwiseAbs().maxCoeff() <= bound + 1e-12);
			}
		}
	}
}

TEST_CASE("sparse and dense weights forward identically")
{
	Rng rng(2);
	auto net = random_net(rng, 4, 6, 2);
	DenseNet<double> sparse = net;
	for (auto &l : sparse.layers) {
		const auto &m = std::get<0>(l.weights);
		l.weights = Eigen::SparseMatrix<double, Eigen::RowMajor>(m.sparseView());
	}
	auto xs = random_inputs(rng, 15, 4);
	auto a = sd_forward<double>(net, xs, 0.1);
	auto b = sd_forward<double>(sparse, xs, 0.1);
	CHECK(a.spike_counts == b.spike_counts);
	for (std::size_t t = 0; t < xs.size(); ++t) {
		CHECK((a.outputs[t] - b.outputs[t]).cwiseAbs().maxCoeff() < 1e-12);
	}
	CHECK(net.layers[1].inf_norm() == doctest::Approx(sparse.layers[1].inf_norm()));
}

TEST_CASE("spike counts do not grow with threshold on a fixed input")
{
	Rng rng(5);
	auto net = random_net(rng, 6, 12, 4);
	auto xs = random_inputs(rng, 80, 6);
	std::uint64_t prev = ~0ull;
	for (double theta : {0.0, 0.1, 0.5, 2.0}) {
		auto res = sd_forward<double>(net, xs, theta);
		std::uint64_t total = 0;
		for (auto c : res.spike_counts) {
			total += c;
		}
		CHECK(total <= prev);
		prev = total;
	}
}

TEST_CASE("sd_forward is deterministic and checks shapes")
{
	Rng rng(6);
	auto net = random_net(rng, 3, 4, 2);
	auto xs = random_inputs(rng, 10, 3);
	auto a = sd_forward<double>(net, xs, 0.3);
	auto b = sd_forward<double>(net, xs, 0.3);
	CHECK(a.spike_counts == b.spike_counts);
	for (std::size_t t = 0; t < xs.size(); ++t) {
		CHECK(a.outputs[t] == b.outputs[t]);
	}
	std::vector<Vec> wrong{Vec::Zero(4)};
	CHECK_THROWS_AS(sd_forward<double>(net, wrong, 0.3), StructuralError);

	DenseNet<double> broken = net;
	broken.layers[1].bias = Vec::Zero(5);
	CHECK_THROWS_AS(broken.validate(), StructuralError);
}

TEST_CASE("weight text format round trip")
{
	Rng rng(7);
	auto net = random_net(rng, 3, 5, 2);
	std::stringstream ss;
	ss.precision(17);
	write_dense_net(ss, net);
	auto back = read_dense_net(ss);
	REQUIRE(back.layers.size() == 2);
	for (std::size_t i = 0; i < 2; ++i) {
		const auto &a = std::get<0>(net.layers[i].weights);
		const auto &b = std::get<0>(back.layers[i].weights);
		CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
		CHECK(back.layers[i].activation == net.layers[i].activation);
	}
	std::istringstream bad("layers 1\nlayer 2 2 relu\n1 2\n3\n");
	CHECK_THROWS(read_dense_net(bad));
}
