#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace genrec {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic, Eigen::RowMajor>;

using MatF = Mat<float>;
using MatD = Mat<double>;

template <class S>
struct Tensor {
  std::string name;
  Mat<S> value;
};

// Ordered, named collection of tensors. Order is part of the checkpoint
// format and of the optimizer state layout.
template <class S>
struct ParameterSet {
  std::vector<Tensor<S>> tensors;

  bool empty() const { return tensors.empty(); }
  size_t size() const { return tensors.size(); }

  size_t num_values() const {
    size_t n = 0;
    for (const auto& t : tensors) n += static_cast<size_t>(t.value.size());
    return n;
  }

  int add(std::string name, Mat<S> value) {
    tensors.push_back({std::move(name), std::move(value)});
    return static_cast<int>(tensors.size()) - 1;
  }

  const Tensor<S>* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }

  template <class T>
  ParameterSet<T> cast() const {
    ParameterSet<T> out;
    for (const auto& t : tensors) out.add(t.name, t.value.template cast<T>());
    return out;
  }
};

// Zero-initialised gradient storage mirroring a ParameterSet.
template <class S>
struct GradSet {
  std::vector<Mat<S>> grads;

  GradSet() = default;
  explicit GradSet(const ParameterSet<S>& params) { reset(params); }

  void reset(const ParameterSet<S>& params) {
    grads.clear();
    for (const auto& t : params.tensors) grads.push_back(Mat<S>::Zero(t.value.rows(), t.value.cols()));
  }
  void zero() {
    for (auto& g : grads) g.setZero();
  }
  bool all_zero() const {
    for (const auto& g : grads)
      if (g.size() > 0 && g.cwiseAbs().maxCoeff() != S(0)) return false;
    return true;
  }
};

}  // namespace genrec
