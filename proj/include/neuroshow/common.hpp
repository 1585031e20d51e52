#ifndef NEUROSHOW_COMMON_HPP
#define NEUROSHOW_COMMON_HPP

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

namespace neuroshow {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Row-major real lattice; rows are image rows (y), columns are image columns (x).
template <typename Scalar>
using Grid = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using GridD = Grid<double>;

/// Input violates a structural contract (bounds, shapes, formats).
class StructuralError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

/// Parameters outside their documented domain.
class ConfigError : public std::invalid_argument {
public:
	using std::invalid_argument::invalid_argument;
};

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits of one generator draw.
/// Defined explicitly so that test oracles can replay the exact sequence.
inline double unit_uniform(Rng &rng)
{
	return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n) by multiply-shift on one generator draw.
inline std::uint64_t uniform_index(Rng &rng, std::uint64_t n)
{
	__extension__ using Wide = unsigned __int128;
	return static_cast<std::uint64_t>((static_cast<Wide>(rng()) * n) >> 64);
}

namespace le {

template <typename T>
void put(Bytes &out, T value)
{
	using U = std::make_unsigned_t<T>;
	auto u = static_cast<U>(value);
	for (std::size_t i = 0; i < sizeof(T); ++i) {
		out.push_back(static_cast<std::uint8_t>(u & 0xFFu));
		if constexpr (sizeof(T) > 1) {
			u = static_cast<U>(u >> 8);
		}
	}
}

template <typename T>
T get(ByteView in, std::size_t offset)
{
	using U = std::make_unsigned_t<T>;
	U u = 0;
	for (std::size_t i = 0; i < sizeof(T); ++i) {
		u = static_cast<U>(u | (static_cast<U>(in[offset + i]) << (8 * i)));
	}
	return static_cast<T>(u);
}

}  // namespace le

}  // namespace neuroshow

#endif  // NEUROSHOW_COMMON_HPP
