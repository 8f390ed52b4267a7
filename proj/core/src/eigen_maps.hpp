// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include "e2est/tensor.hpp"

namespace e2est::detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;

inline MatMap as_mat(Tensor& t) {
  return MatMap(t.storage().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

inline CMatMap as_mat(const Tensor& t) {
  return CMatMap(t.storage().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

inline Eigen::Map<Eigen::RowVectorXd> as_row(Tensor& t) {
  return Eigen::Map<Eigen::RowVectorXd>(t.storage().data(), static_cast<Eigen::Index>(t.size()));
}

inline Eigen::Map<const Eigen::RowVectorXd> as_row(const Tensor& t) {
  return Eigen::Map<const Eigen::RowVectorXd>(t.storage().data(), static_cast<Eigen::Index>(t.size()));
}

}  // namespace e2est::detail
