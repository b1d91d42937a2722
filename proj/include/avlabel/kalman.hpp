// avlabel/kalman.hpp

// Copyright 2026  The avlabel Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Constant-velocity Kalman filter over (cx, cy, aspect, height) and velocities.

#pragma once

#include <Eigen/Dense>

#include "avlabel/errors.hpp"

namespace avlabel {

struct BBox {
  double x = 0.0, y = 0.0, w = 0.0, h = 0.0;
  double area() const { return w * h; }
  bool operator==(const BBox &) const = default;
};

using Vec8 = Eigen::Matrix<double, 8, 1>;
using Mat8 = Eigen::Matrix<double, 8, 8>;
using Vec4 = Eigen::Matrix<double, 4, 1>;
using Mat4 = Eigen::Matrix<double, 4, 4>;

struct KalmanState {
  Vec8 mean = Vec8::Zero();
  Mat8 covariance = Mat8::Identity();
};

inline Vec4 to_xyah(const BBox &b) {
  Vec4 m;
  m << b.x + b.w / 2.0, b.y + b.h / 2.0, b.w / b.h, b.h;
  return m;
}

inline BBox to_bbox(const Vec8 &mean) {
  double h = mean(3), w = mean(2) * mean(3);
  return BBox{mean(0) - w / 2.0, mean(1) - h / 2.0, w, h};
}

struct KalmanParams {
  double std_weight_position = 1.0 / 20.0;
  double std_weight_velocity = 1.0 / 160.0;
};

class KalmanFilter {
 public:
  explicit KalmanFilter(KalmanParams p = {}) : p_(p) {
    motion_ = Mat8::Identity();
    for (int i = 0; i < 4; ++i) motion_(i, 4 + i) = 1.0;
    update_ = Eigen::Matrix<double, 4, 8>::Zero();
    for (int i = 0; i < 4; ++i) update_(i, i) = 1.0;
  }

  KalmanState initiate(const BBox &measurement) const {
    if (!(measurement.w > 0.0 && measurement.h > 0.0)) throw ArgumentError("box must have w, h > 0");
    KalmanState s;
    s.mean.head<4>() = to_xyah(measurement);
    s.mean.tail<4>().setZero();
    double h = measurement.h, wp = p_.std_weight_position, wv = p_.std_weight_velocity;
    Vec8 sd;
    sd << 2 * wp * h, 2 * wp * h, 1e-2, 2 * wp * h, 10 * wv * h, 10 * wv * h, 1e-5, 10 * wv * h;
    s.covariance = sd.array().square().matrix().asDiagonal();
    return s;
  }

  KalmanState predict(const KalmanState &s) const {
    double h = s.mean(3), wp = p_.std_weight_position, wv = p_.std_weight_velocity;
    Vec8 sd;
    sd << wp * h, wp * h, 1e-2, wp * h, wv * h, wv * h, 1e-5, wv * h;
    Mat8 q = sd.array().square().matrix().asDiagonal();
    KalmanState out;
    out.mean = motion_ * s.mean;
    out.covariance = motion_ * s.covariance * motion_.transpose() + q;
    return out;
  }

  KalmanState update(const KalmanState &s, const BBox &measurement) const {
    if (!(measurement.w > 0.0 && measurement.h > 0.0)) throw ArgumentError("box must have w, h > 0");
    double h = s.mean(3), wp = p_.std_weight_position;
    Vec4 sd;
    sd << wp * h, wp * h, 1e-1, wp * h;
    Mat4 r = sd.array().square().matrix().asDiagonal();
    Mat4 proj = update_ * s.covariance * update_.transpose() + r;
    Eigen::Matrix<double, 8, 4> pht = s.covariance * update_.transpose();
    // K = P H' S^-1, via the Cholesky factor of S.
    Eigen::LLT<Mat4> llt(proj);
    if (llt.info() != Eigen::Success) throw InternalError("innovation covariance not positive definite");
    Eigen::Matrix<double, 8, 4> gain = llt.solve(pht.transpose()).transpose();
    Vec4 innovation = to_xyah(measurement) - update_ * s.mean;
    KalmanState out;
    out.mean = s.mean + gain * innovation;
    out.covariance = s.covariance - gain * proj * gain.transpose();
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
    check_psd(out.covariance);
    return out;
  }

  static void check_psd(const Mat8 &c) {
    Eigen::SelfAdjointEigenSolver<Mat8> es(c, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-9) throw InternalError("covariance lost positive semidefiniteness");
  }

 private:
  KalmanParams p_;
  Mat8 motion_;
  Eigen::Matrix<double, 4, 8> update_;
};

}  // namespace avlabel
