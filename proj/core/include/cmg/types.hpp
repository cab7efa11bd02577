#pragma once

#include <Eigen/Core>

#include <string>

#include "cmg/errors.hpp"

namespace cmg {

template <typename T>
using MatrixT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVectorT = Eigen::Matrix<T, 1, Eigen::Dynamic>;

using Matrix = MatrixT<double>;
using RowVector = RowVectorT<double>;
using Vector3 = Eigen::Vector3d;

inline void require(bool cond, const std::string& message) {
  if (!cond) throw ValidationError(message);
}

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <typename A, typename B>
void require_same_shape(const A& a, const B& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ValidationError(std::string(what) + ": shape mismatch " + shape_str(a.rows(), a.cols()) +
                          " vs " + shape_str(b.rows(), b.cols()));
  }
}

}  // namespace cmg
