#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <type_traits>
#include <vector>

namespace duallaat {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Index = Eigen::Index;
using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;
using Rng = std::mt19937_64;

enum class Mode { Train, Eval };

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x)
{
    using Scalar = typename Derived::Scalar;
    return (Scalar(1) + (-x).exp()).inverse();
}

template <typename Scalar>
    requires std::is_floating_point_v<Scalar>
Scalar sigmoid(Scalar x)
{
    return Scalar(1) / (Scalar(1) + std::exp(-x));
}

// Row-wise softmax, in place. Every row must have at least one finite entry.
template <typename Derived>
void softmax_rows(Eigen::MatrixBase<Derived>& scores)
{
    for (Index r = 0; r < scores.rows(); ++r) {
        auto row = scores.row(r);
        const auto peak = row.maxCoeff();
        row = (row.array() - peak).exp().matrix();
        row /= row.sum();
    }
}

inline std::size_t uniform_index(Rng& rng, std::size_t n)
{
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

// Fisher-Yates with our own index draw so shuffles only depend on the engine.
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng)
{
    for (std::size_t i = items.size(); i > 1; --i) {
        std::swap(items[i - 1], items[uniform_index(rng, i)]);
    }
}

}  // namespace duallaat
