/*
 * Copyright 2026 The phonconv Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/** @file classify.hpp Binary variant classifiers.
 *
 * Inputs are scaled per dimension to (v - min) / (max - min) using the
 * feature's allowed range, so formant axes of different magnitude weigh
 * equally. Two kinds are available:
 *
 * - nearest_prototype: one centroid per variant, label of the nearer one.
 * - max_margin_linear: linear SVM trained with Platt's SMO.
 *
 * Classifiers are immutable values; retraining returns a new instance.
 */

#pragma once

#include <phonconv/convergence.hpp>
#include <phonconv/error.hpp>

#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace phonconv {

enum class ClassifierKind { nearest_prototype, max_margin_linear };

constexpr const char* to_string(ClassifierKind k) noexcept {
  return k == ClassifierKind::nearest_prototype ? "nearest_prototype" : "max_margin_linear";
}

struct LabeledPoint {
  Values values;
  std::string label;

  friend bool operator==(const LabeledPoint&, const LabeledPoint&) = default;
};

struct Prediction {
  std::string label;
  double score = 0.0;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

struct SmoOptions {
  double c = 1.0;
  double tolerance = 1e-3;
  double alpha_epsilon = 1e-3;
  std::size_t max_passes = 10000;
};

namespace detail {

inline double dot(const Values& a, const Values& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double distance(const Values& a, const Values& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

/// Linear-kernel SMO (Platt 1998) with the first/second choice heuristics.
/// Labels are +1/-1; the decision function is w.x - b. Sweeps are
/// deterministic (no random starting points).
class LinearSmo {
 public:
  LinearSmo(const std::vector<Values>& x, const std::vector<int>& y, SmoOptions opt)
      : x_(x), y_(y), opt_(opt), alpha_(x.size(), 0.0), w_(x.empty() ? 0 : x[0].size(), 0.0) {}

  void run() {
    std::size_t changed = 0;
    bool examine_all = true;
    std::size_t passes = 0;
    while ((changed > 0 || examine_all) && passes < opt_.max_passes) {
      ++passes;
      changed = 0;
      if (examine_all) {
        for (std::size_t i = 0; i < x_.size(); ++i) changed += examine(i);
      } else {
        for (std::size_t i = 0; i < x_.size(); ++i)
          if (non_bound(i)) changed += examine(i);
      }
      if (examine_all)
        examine_all = false;
      else if (changed == 0)
        examine_all = true;
    }
    passes_ = passes;
  }

  const Values& weights() const noexcept { return w_; }
  double bias() const noexcept { return b_; }
  std::size_t passes() const noexcept { return passes_; }

 private:
  double output(std::size_t i) const { return dot(w_, x_[i]) - b_; }
  double error(std::size_t i) const { return output(i) - y_[i]; }
  bool non_bound(std::size_t i) const { return alpha_[i] > 0.0 && alpha_[i] < opt_.c; }
  double kernel(std::size_t i, std::size_t j) const { return dot(x_[i], x_[j]); }

  int examine(std::size_t i2) {
    const double y2 = y_[i2];
    const double a2 = alpha_[i2];
    const double e2 = error(i2);
    const double r2 = e2 * y2;
    if (!((r2 < -opt_.tolerance && a2 < opt_.c) || (r2 > opt_.tolerance && a2 > 0.0))) return 0;

    std::size_t non_bound_count = 0;
    for (std::size_t i = 0; i < x_.size(); ++i) non_bound_count += non_bound(i) ? 1 : 0;

    if (non_bound_count > 1) {
      std::size_t best = i2;
      double best_gap = -1.0;
      for (std::size_t i = 0; i < x_.size(); ++i) {
        if (!non_bound(i)) continue;
        const double gap = std::abs(error(i) - e2);
        if (gap > best_gap) {
          best_gap = gap;
          best = i;
        }
      }
      if (take_step(best, i2)) return 1;
    }
    for (std::size_t i = 0; i < x_.size(); ++i)
      if (non_bound(i) && take_step(i, i2)) return 1;
    for (std::size_t i = 0; i < x_.size(); ++i)
      if (take_step(i, i2)) return 1;
    return 0;
  }

  bool take_step(std::size_t i1, std::size_t i2) {
    if (i1 == i2) return false;
    const double a1 = alpha_[i1], a2 = alpha_[i2];
    const double y1 = y_[i1], y2 = y_[i2];
    const double e1 = error(i1), e2 = error(i2);
    const double s = y1 * y2;
    const double c = opt_.c;

    double lo, hi;
    if (y1 != y2) {
      lo = std::max(0.0, a2 - a1);
      hi = std::min(c, c + a2 - a1);
    } else {
      lo = std::max(0.0, a1 + a2 - c);
      hi = std::min(c, a1 + a2);
    }
    if (lo >= hi) return false;

    const double k11 = kernel(i1, i1), k12 = kernel(i1, i2), k22 = kernel(i2, i2);
    const double eta = k11 + k22 - 2.0 * k12;
    double new_a2;
    if (eta > 0.0) {
      new_a2 = std::clamp(a2 + y2 * (e1 - e2) / eta, lo, hi);
    } else {
      // Objective at both ends of the segment.
      const double f1 = y1 * (e1 + b_) - a1 * k11 - s * a2 * k12;
      const double f2 = y2 * (e2 + b_) - s * a1 * k12 - a2 * k22;
      const double l1 = a1 + s * (a2 - lo);
      const double h1 = a1 + s * (a2 - hi);
      const double lobj = l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11 + 0.5 * lo * lo * k22 + s * lo * l1 * k12;
      const double hobj = h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11 + 0.5 * hi * hi * k22 + s * hi * h1 * k12;
      if (lobj < hobj - opt_.alpha_epsilon)
        new_a2 = lo;
      else if (lobj > hobj + opt_.alpha_epsilon)
        new_a2 = hi;
      else
        new_a2 = a2;
    }
    if (std::abs(new_a2 - a2) < opt_.alpha_epsilon * (new_a2 + a2 + opt_.alpha_epsilon)) return false;

    double new_a1 = a1 + s * (a2 - new_a2);
    if (new_a1 < 0.0) {
      new_a2 += s * new_a1;
      new_a1 = 0.0;
    } else if (new_a1 > c) {
      new_a2 += s * (new_a1 - c);
      new_a1 = c;
    }

    const double b1 = e1 + y1 * (new_a1 - a1) * k11 + y2 * (new_a2 - a2) * k12 + b_;
    const double b2 = e2 + y1 * (new_a1 - a1) * k12 + y2 * (new_a2 - a2) * k22 + b_;
    if (new_a1 > 0.0 && new_a1 < c)
      b_ = b1;
    else if (new_a2 > 0.0 && new_a2 < c)
      b_ = b2;
    else
      b_ = 0.5 * (b1 + b2);

    for (std::size_t d = 0; d < w_.size(); ++d)
      w_[d] += y1 * (new_a1 - a1) * x_[i1][d] + y2 * (new_a2 - a2) * x_[i2][d];
    alpha_[i1] = new_a1;
    alpha_[i2] = new_a2;
    return true;
  }

  const std::vector<Values>& x_;
  const std::vector<int>& y_;
  SmoOptions opt_;
  std::vector<double> alpha_;
  Values w_;
  double b_ = 0.0;
  std::size_t passes_ = 0;
};

}  // namespace detail

class VariantClassifier {
 public:
  const std::string& feature_id() const noexcept { return feature_id_; }
  ClassifierKind kind() const noexcept { return kind_; }
  /// The two variant labels; labels()[0] is the +1 class of the linear model.
  const std::array<std::string, 2>& labels() const noexcept { return labels_; }
  const std::string& canonical_variant() const noexcept { return canonical_; }
  /// Scaled-space centroids, in labels() order (nearest_prototype only).
  const std::array<Values, 2>& prototypes() const noexcept { return prototypes_; }
  const Values& weights() const noexcept { return weights_; }
  double bias() const noexcept { return bias_; }
  const std::vector<LabeledPoint>& training_set() const noexcept { return training_; }

  Values scale(const Values& v) const {
    Values s(v.size());
    for (std::size_t d = 0; d < v.size(); ++d) s[d] = (v[d] - offsets_[d]) / widths_[d];
    return s;
  }

  Prediction predict(const Values& values) const {
    if (values.size() != widths_.size())
      throw Error(Errc::dimension_mismatch, feature_id_ + ": expected " + std::to_string(widths_.size()) +
                                                " values, got " + std::to_string(values.size()));
    const Values x = scale(values);
    if (kind_ == ClassifierKind::nearest_prototype) {
      const double d0 = detail::distance(x, prototypes_[0]);
      const double d1 = detail::distance(x, prototypes_[1]);
      if (d0 == d1) return {canonical_, 0.0};
      const double near = std::min(d0, d1), far = std::max(d0, d1);
      return {d0 < d1 ? labels_[0] : labels_[1], (far - near) / (far + near)};
    }
    const double f = detail::dot(weights_, x) - bias_;
    if (f == 0.0) return {canonical_, 0.0};
    return {f > 0.0 ? labels_[0] : labels_[1], std::abs(f)};
  }

  /// Refit from the retained training set plus `new_points`.
  VariantClassifier retrain_online(const std::vector<LabeledPoint>& new_points) const {
    VariantClassifier next = *this;
    next.training_.insert(next.training_.end(), new_points.begin(), new_points.end());
    next.fit();
    return next;
  }

  friend VariantClassifier train_classifier(const FeatureDefinition&, std::vector<LabeledPoint>,
                                            ClassifierKind, SmoOptions);

 private:
  void fit() {
    std::array<std::vector<Values>, 2> by_label;
    for (const auto& p : training_) {
      if (p.values.size() != widths_.size())
        throw Error(Errc::dimension_mismatch, feature_id_ + ": training point dimensionality");
      if (p.label == labels_[0])
        by_label[0].push_back(scale(p.values));
      else if (p.label == labels_[1])
        by_label[1].push_back(scale(p.values));
      else
        throw Error(Errc::not_binary, feature_id_ + ": unexpected label " + p.label);
    }
    for (int k = 0; k < 2; ++k)
      if (by_label[k].empty()) throw Error(Errc::insufficient_data, feature_id_ + ": no points for " + labels_[k]);

    if (kind_ == ClassifierKind::nearest_prototype) {
      for (int k = 0; k < 2; ++k) {
        Values c(widths_.size(), 0.0);
        for (const auto& v : by_label[k])
          for (std::size_t d = 0; d < c.size(); ++d) c[d] += v[d];
        for (auto& x : c) x /= static_cast<double>(by_label[k].size());
        prototypes_[k] = std::move(c);
      }
      return;
    }

    std::vector<Values> x;
    std::vector<int> y;
    for (const auto& p : training_) {
      x.push_back(scale(p.values));
      y.push_back(p.label == labels_[0] ? +1 : -1);
    }
    detail::LinearSmo smo(x, y, smo_);
    smo.run();
    weights_ = smo.weights();
    bias_ = smo.bias();
  }

  std::string feature_id_;
  ClassifierKind kind_ = ClassifierKind::nearest_prototype;
  std::array<std::string, 2> labels_;
  std::string canonical_;
  Values offsets_;
  Values widths_;
  std::array<Values, 2> prototypes_;
  Values weights_;
  double bias_ = 0.0;
  SmoOptions smo_;
  std::vector<LabeledPoint> training_;
};

/// Label set and scaling come from `def`; the feature must have exactly two
/// variants and every training label must be one of them.
inline VariantClassifier train_classifier(const FeatureDefinition& def, std::vector<LabeledPoint> points,
                                          ClassifierKind kind, SmoOptions smo = {}) {
  if (def.variants.size() != 2)
    throw Error(Errc::not_binary, def.id + ": " + std::to_string(def.variants.size()) + " variants");
  VariantClassifier c;
  c.feature_id_ = def.id;
  c.kind_ = kind;
  c.labels_ = {def.variants[0].label, def.variants[1].label};
  c.canonical_ = def.canonical_variant;
  for (const auto& dim : def.dimensions) {
    c.offsets_.push_back(dim.min);
    c.widths_.push_back(dim.width());
  }
  c.smo_ = smo;
  c.training_ = std::move(points);
  c.fit();
  return c;
}

/// One point per variant, at its configured prototype.
inline std::vector<LabeledPoint> prototype_points(const FeatureDefinition& def) {
  std::vector<LabeledPoint> pts;
  for (const auto& v : def.variants) pts.push_back({v.prototype, v.label});
  return pts;
}

// Training fixture format --------------------------------------------------
//
// Tab-separated text, one point per line:
//
//     feature_id <TAB> value_1 <TAB> ... <TAB> value_n <TAB> label
//
// Blank lines and lines starting with '#' are ignored.

inline std::vector<LabeledPoint> parse_training_points(std::istream& in, const FeatureDefinition& def) {
  std::vector<LabeledPoint> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() < 3) throw Error(Errc::parse_error, "training line " + std::to_string(lineno) + ": too few columns");
    if (cols.front() != def.id) continue;
    if (cols.size() != def.dimensionality() + 2)
      throw Error(Errc::validation_error, "training line " + std::to_string(lineno) + ": dimensionality");
    LabeledPoint p;
    for (std::size_t i = 1; i + 1 < cols.size(); ++i) {
      try {
        std::size_t used = 0;
        p.values.push_back(std::stod(cols[i], &used));
        if (used != cols[i].size()) throw std::invalid_argument(cols[i]);
      } catch (const std::exception&) {
        throw Error(Errc::parse_error, "training line " + std::to_string(lineno) + ": bad number '" + cols[i] + "'");
      }
    }
    p.label = cols.back();
    if (def.variant(p.label) == nullptr)
      throw Error(Errc::validation_error, "training line " + std::to_string(lineno) + ": unknown label " + p.label);
    out.push_back(std::move(p));
  }
  return out;
}

inline void write_training_points(std::ostream& out, const std::string& feature_id,
                                  const std::vector<LabeledPoint>& points) {
  std::ostringstream buf;
  buf.precision(17);
  for (const auto& p : points) {
    buf << feature_id;
    for (double v : p.values) buf << '\t' << v;
    buf << '\t' << p.label << '\n';
  }
  out << buf.str();
}

}  // namespace phonconv
