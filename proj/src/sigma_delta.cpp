#include <neuroshow/sigma_delta.hpp>

#include <iomanip>
#include <limits>

namespace neuroshow {

namespace {

void expect_word(std::istream &in, const char *word)
{
	std::string got;
	if (!(in >> got) || got != word) {
		throw StructuralError(std::string("weights: expected '") + word +
		                      "', got '" + got + "'");
	}
}

template <typename T>
T read_value(std::istream &in, const char *what)
{
	T v{};
	if (!(in >> v)) {
		throw StructuralError(std::string("weights: cannot read ") + what);
	}
	return v;
}

}  // namespace

DenseNet<double> read_dense_net(std::istream &in)
{
	DenseNet<double> net;
	expect_word(in, "layers");
	const auto n = read_value<long>(in, "layer count");
	if (n < 1) {
		throw StructuralError("weights: layer count must be >= 1");
	}
	for (long i = 0; i < n; ++i) {
		expect_word(in, "layer");
		const auto rows = read_value<long>(in, "rows");
		const auto cols = read_value<long>(in, "cols");
		const auto act = read_value<std::string>(in, "activation");
		if (rows < 1 || cols < 1) {
			throw StructuralError("weights: layer dimensions must be positive");
		}
		DenseLayer<double> layer;
		if (act == "relu") {
			layer.activation = Activation::Relu;
		} else if (act == "identity") {
			layer.activation = Activation::Identity;
		} else {
			throw StructuralError("weights: unknown activation '" + act + "'");
		}
		Eigen::MatrixXd w(rows, cols);
		for (long r = 0; r < rows; ++r) {
			for (long c = 0; c < cols; ++c) {
				w(r, c) = read_value<double>(in, "weight");
			}
		}
		layer.bias.resize(rows);
		for (long r = 0; r < rows; ++r) {
			layer.bias[r] = read_value<double>(in, "bias");
		}
		layer.weights = std::move(w);
		net.layers.push_back(std::move(layer));
	}
	net.validate();
	return net;
}

void write_dense_net(std::ostream &out, const DenseNet<double> &net)
{
	net.validate();
	const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
	out << "layers " << net.layers.size() << "\n";
	for (const auto &l : net.layers) {
		const Eigen::MatrixXd w = std::visit(
		    [](const auto &m) -> Eigen::MatrixXd { return Eigen::MatrixXd(m); },
		    l.weights);
		out << "layer " << w.rows() << ' ' << w.cols() << ' '
		    << (l.activation == Activation::Relu ? "relu" : "identity") << "\n";
		for (Eigen::Index r = 0; r < w.rows(); ++r) {
			for (Eigen::Index c = 0; c < w.cols(); ++c) {
				out << (c ? " " : "") << w(r, c);
			}
			out << "\n";
		}
		for (Eigen::Index r = 0; r < l.bias.size(); ++r) {
			out << (r ? " " : "") << l.bias[r];
		}
		out << "\n";
	}
	out.precision(old_precision);
}

}  // namespace neuroshow
