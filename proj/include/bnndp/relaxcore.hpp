#pragma once

#include <Eigen/Dense>

#include <limits>
#include <optional>
#include <vector>

namespace bnndp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Scalar closed interval.
struct Range {
  double lo = 0.0;
  double hi = 0.0;

  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
  bool contains(double v, double slack = 0.0) const { return v >= lo - slack && v <= hi + slack; }
};

Range operator+(Range a, Range b);
Range operator-(Range a, Range b);
Range operator*(Range a, Range b);
Range operator*(double c, Range a);
Range intersect(Range a, Range b);  // empty intersections collapse to the nearer end of a
Range widen(Range a, double abs_tol, double rel_tol);

// Vector of intervals, lo <= hi componentwise.
struct Interval {
  Vec lo;
  Vec hi;

  Interval() = default;
  Interval(Vec lo_, Vec hi_);
  static Interval point(const Vec& x) { return Interval(x, x); }

  Index dim() const { return lo.size(); }
  Range at(Index i) const { return {lo[i], hi[i]}; }
  bool contains(const Vec& x, double slack = 0.0) const;
};

// Axis-aligned box. Unbounded ends are flagged and read back as -inf/+inf.
class Box {
 public:
  Box() = default;
  Box(Vec lo, Vec hi);
  static Box whole(Index n);
  static Box point(const Vec& x) { return Box(x, x); }
  static Box ball(const Vec& center, double radius);

  Index dim() const { return lo_.size(); }
  double lower(Index i) const { return lo_[i]; }
  double upper(Index i) const { return hi_[i]; }
  bool lower_unbounded(Index i) const { return lo_open_[static_cast<size_t>(i)]; }
  bool upper_unbounded(Index i) const { return hi_open_[static_cast<size_t>(i)]; }
  void set_lower_unbounded(Index i);
  void set_upper_unbounded(Index i);
  bool bounded() const;

  const Vec& lo() const { return lo_; }
  const Vec& hi() const { return hi_; }
  Vec center() const;  // bounded boxes only
  Vec width() const;
  bool contains(const Vec& x, double slack = 0.0) const;

  // Split along dimension d at the midpoint.
  std::pair<Box, Box> bisect(Index d) const;

 private:
  Vec lo_;
  Vec hi_;
  std::vector<bool> lo_open_;
  std::vector<bool> hi_open_;
};

Box relu_image(const Box& b);

// Row-wise affine enclosure: A_lo z + b_lo <= f(z) <= A_hi z + b_hi.
struct AffineRelaxation {
  Mat A_lo;
  Vec b_lo;
  Mat A_hi;
  Vec b_hi;

  AffineRelaxation() = default;
  AffineRelaxation(Mat Alo, Vec blo, Mat Ahi, Vec bhi);
  static AffineRelaxation exact(const Mat& A, const Vec& b);
  static AffineRelaxation constant(const Interval& c, Index in_dim);

  Index rows() const { return b_lo.size(); }
  Index cols() const { return A_lo.cols(); }
  Vec lower_at(const Vec& z) const { return A_lo * z + b_lo; }
  Vec upper_at(const Vec& z) const { return A_hi * z + b_hi; }
  Interval evaluate(const Vec& z) const { return Interval(lower_at(z), upper_at(z).cwiseMax(lower_at(z))); }
};

inline Mat pos_part(const Mat& M) { return M.cwiseMax(0.0); }
inline Mat neg_part(const Mat& M) { return M.cwiseMin(0.0); }

// Exact image of an interval under x -> M x.
Interval linmap_interval(const Mat& M, const Interval& x);
Range linmap_row(const Eigen::Ref<const Eigen::RowVectorXd>& row, const Interval& x);

// Relaxation of z -> M f(z) given a relaxation of f.
AffineRelaxation linmap_affine(const Mat& M, const AffineRelaxation& R);
// Single-sided versions used by the value-function composition.
void compose_lower(const Mat& M, const AffineRelaxation& R, Mat& A, Vec& b);
void compose_upper(const Mat& M, const AffineRelaxation& R, Mat& A, Vec& b);

// Range of z -> A z + b over a box; rows touching an unbounded side give +-inf.
Interval affine_range_on_box(const Mat& A, const Vec& b, const Box& box);
Range affine_range_on_box(const Eigen::Ref<const Eigen::RowVectorXd>& a, double b, const Box& box);

// Unbounded-region enclosure: around an anchor box the value stays within a cone
//   A_lo z + b_lo - G_lo dist(z, anchor) <= V(z) <= A_hi z + b_hi + G_hi dist(z, anchor)
// optionally clipped to a constant interval.
struct ComplementBound {
  Box anchor;
  AffineRelaxation cone;
  Mat growth_lo;
  Mat growth_hi;
  bool has_cone = false;
  std::optional<Interval> clamp;

  Interval evaluate(const Vec& z) const;
};

Vec box_distance(const Vec& z, const Box& anchor);

struct PwaRelaxation {
  std::vector<Box> pieces;
  std::vector<AffineRelaxation> relax;
  std::optional<ComplementBound> complement;

  // Enclosure at z using the first containing piece, else the complement.
  Interval evaluate(const Vec& z) const;
};

}  // namespace bnndp
