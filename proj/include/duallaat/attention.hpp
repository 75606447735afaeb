#pragma once

#include "duallaat/error.hpp"
#include "duallaat/tensor.hpp"

#include <stdexcept>
#include <vector>

namespace duallaat {

// One attention head: the code projection replaces the per-label query
// vectors of ordinary label-wise attention.
template <typename Scalar>
struct AttentionHead {
    Matrix<Scalar> w_note;  // d_shared x d_note
    Matrix<Scalar> w_code;  // d_code x d_shared
};

// Shared across codes, so it works for any label space.
template <typename Scalar>
struct Classifier {
    Matrix<Scalar> weight;  // (heads * d_note) x 1
    Matrix<Scalar> bias;    // 1 x 1
};

template <typename Scalar>
struct DualAttentionOutput {
    std::vector<Matrix<Scalar>> attention;  // per head, |L| x t_note
    Matrix<Scalar> joint;                   // (heads * d_note) x |L|
    Vector<Scalar> logits;                  // |L|
    Vector<Scalar> probabilities;           // |L|
};

// Additive surrogate for -inf on masked note positions.
constexpr double kMaskedScore = -1e9;

using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

// Per head: A = softmax_t(tanh(H_code W_code) tanh(W_note H_note)) and
// J = H_note A^T; the heads' J are stacked along the feature axis.
template <typename Scalar>
DualAttentionOutput<Scalar> attend(const Matrix<Scalar>& note_hidden, const Matrix<Scalar>& code_hidden,
                                   const std::vector<AttentionHead<Scalar>>& heads, const Mask& valid)
{
    if (valid.size() != note_hidden.cols()) throw std::invalid_argument("mask length != note length");
    if (!valid.any()) throw DataError("attention needs at least one valid note position");
    if (heads.empty()) throw std::invalid_argument("at least one attention head is required");

    const Index d_note = note_hidden.rows();
    DualAttentionOutput<Scalar> out;
    out.joint.resize(d_note * static_cast<Index>(heads.size()), code_hidden.rows());
    for (std::size_t m = 0; m < heads.size(); ++m) {
        const auto& head = heads[m];
        if (head.w_note.cols() != d_note || head.w_code.rows() != code_hidden.cols() ||
            head.w_note.rows() != head.w_code.cols()) {
            throw std::invalid_argument("attention head shape mismatch");
        }
        const Matrix<Scalar> query = (code_hidden * head.w_code).array().tanh().matrix();
        const Matrix<Scalar> key = (head.w_note * note_hidden).array().tanh().matrix();
        Matrix<Scalar> scores = query * key;
        for (Index t = 0; t < scores.cols(); ++t) {
            if (!valid(t)) scores.col(t).array() += static_cast<Scalar>(kMaskedScore);
        }
        softmax_rows(scores);
        for (Index t = 0; t < scores.cols(); ++t) {
            if (!valid(t)) scores.col(t).setZero();
        }
        out.joint.middleRows(static_cast<Index>(m) * d_note, d_note).noalias() = note_hidden * scores.transpose();
        out.attention.push_back(std::move(scores));
    }
    return out;
}

template <typename Scalar>
void classify(DualAttentionOutput<Scalar>& out, const Classifier<Scalar>& classifier)
{
    if (classifier.weight.rows() != out.joint.rows() || classifier.weight.cols() != 1 ||
        classifier.bias.size() != 1) {
        throw std::invalid_argument("classifier dimension does not match the attention output");
    }
    out.logits = (out.joint.transpose() * classifier.weight).col(0);
    out.logits.array() += classifier.bias(0, 0);
    out.probabilities = sigmoid(out.logits.array()).matrix();
}

}  // namespace duallaat
