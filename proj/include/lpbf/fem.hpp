// SPDX-FileCopyrightText: Copyright (c) 2026 the lpbf-supportopt authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "lpbf/error.hpp"
#include "lpbf/geometry.hpp"
#include "lpbf/interpolation.hpp"
#include "lpbf/materials.hpp"

namespace lpbf {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Per-element effective volumetric heat capacity rho*c (J/(mm^3 K)) and
/// conductivity (W/(mm K)).
struct ElementCoeffs {
  std::vector<double> rho_c;
  std::vector<double> k;
};

/// Multiplier applied to the bulk properties of element `e` during `stage`.
/// Part elements are bulk; designable elements use the extended material of
/// their mean level-set value; layers above `stage` are scaled by the ersatz
/// factor on top of that.
inline double property_scale(const BuildModel& model, double phi_mean, int e, int stage,
                             const ProcessParams& proc) {
  const double base =
      model.is_part(e) ? 1.0 : extended_factor(phi_mean, proc.w_heaviside, proc.d_void);
  return model.layer_of_element[e] <= stage ? base : proc.ersatz_inactive * base;
}

/// d(property_scale)/d(phi_mean).
inline double property_scale_derivative(const BuildModel& model, double phi_mean, int e,
                                        int stage, const ProcessParams& proc) {
  if (model.is_part(e)) return 0.0;
  const double d = extended_factor_derivative(phi_mean, proc.w_heaviside, proc.d_void);
  return model.layer_of_element[e] <= stage ? d : proc.ersatz_inactive * d;
}

inline ElementCoeffs element_coeffs(const BuildModel& model, const LevelSetField& field,
                                    int stage, const MaterialProps& mat,
                                    const ProcessParams& proc) {
  check_stage(model, stage);
  ElementCoeffs out;
  out.rho_c.resize(model.elements.size());
  out.k.resize(model.elements.size());
  const double rc = mat.volumetric_heat_capacity();
  for (int e = 0; e < model.element_count(); ++e) {
    const double s = property_scale(model, element_mean_phi(model, field, e), e, stage, proc);
    out.rho_c[e] = s * rc;
    out.k[e] = s * mat.k;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear triangle element matrices

struct ElementShape {
  double area = 0.0;
  std::array<double, 3> dNdx{};
  std::array<double, 3> dNdy{};
};

inline ElementShape element_shape(const BuildModel& model, int e) {
  const auto& n = model.elements[e];
  const Point2& p0 = model.nodes[n[0]];
  const Point2& p1 = model.nodes[n[1]];
  const Point2& p2 = model.nodes[n[2]];
  const double twice_area = (p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y);
  if (!(twice_area > 0.0))
    throw DimensionError("element " + std::to_string(e) + " is degenerate or clockwise");
  ElementShape s;
  s.area = 0.5 * twice_area;
  s.dNdx = {(p1.y - p2.y) / twice_area, (p2.y - p0.y) / twice_area, (p0.y - p1.y) / twice_area};
  s.dNdy = {(p2.x - p1.x) / twice_area, (p0.x - p2.x) / twice_area, (p1.x - p0.x) / twice_area};
  return s;
}

/// Consistent mass matrix of NᵀN for unit coefficient.
inline Eigen::Matrix3d unit_mass(const ElementShape& s) {
  Eigen::Matrix3d m;
  m << 2, 1, 1, 1, 2, 1, 1, 1, 2;
  return m * (s.area / 12.0);
}

/// BᵀB integrated over the element for unit conductivity.
inline Eigen::Matrix3d unit_stiffness(const ElementShape& s) {
  Eigen::Matrix3d k;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) k(a, b) = s.area * (s.dNdx[a] * s.dNdx[b] + s.dNdy[a] * s.dNdy[b]);
  return k;
}

inline Eigen::Vector3d gather(const Vector& v, const ElementNodes& n) {
  return {v[n[0]], v[n[1]], v[n[2]]};
}

/// Assembles element-wise scaled mass/stiffness matrices onto a sparsity
/// pattern computed once per mesh.
class Assembler {
 public:
  enum class Kind { mass, stiffness };

  explicit Assembler(const BuildModel& model) {
    const int ne = model.element_count();
    shapes_.reserve(ne);
    unit_mass_.reserve(ne);
    unit_stiffness_.reserve(ne);
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(9 * static_cast<size_t>(ne));
    for (int e = 0; e < ne; ++e) {
      shapes_.push_back(element_shape(model, e));
      unit_mass_.push_back(lpbf::unit_mass(shapes_.back()));
      unit_stiffness_.push_back(lpbf::unit_stiffness(shapes_.back()));
      for (int a : model.elements[e])
        for (int b : model.elements[e]) triplets.emplace_back(a, b, 0.0);
    }
    pattern_.resize(model.node_count(), model.node_count());
    pattern_.setFromTriplets(triplets.begin(), triplets.end());
    pattern_.makeCompressed();
    std::fill(pattern_.valuePtr(), pattern_.valuePtr() + pattern_.nonZeros(), 0.0);

    slots_.resize(9 * static_cast<size_t>(ne));
    for (int e = 0; e < ne; ++e) {
      const auto& n = model.elements[e];
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
          const int col = n[b];
          const auto* begin = pattern_.innerIndexPtr() + pattern_.outerIndexPtr()[col];
          const auto* end = pattern_.innerIndexPtr() + pattern_.outerIndexPtr()[col + 1];
          const auto* it = std::lower_bound(begin, end, n[a]);
          slots_[9 * e + 3 * a + b] = static_cast<int>(it - pattern_.innerIndexPtr());
        }
    }
  }

  [[nodiscard]] SparseMatrix assemble(std::span<const double> coeff, Kind kind) const {
    SparseMatrix out = pattern_;
    double* values = out.valuePtr();
    const auto& local = kind == Kind::mass ? unit_mass_ : unit_stiffness_;
    for (size_t e = 0; e < local.size(); ++e) {
      const double c = coeff[e];
      const Eigen::Matrix3d& m = local[e];
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) values[slots_[9 * e + 3 * a + b]] += c * m(a, b);
    }
    return out;
  }

  [[nodiscard]] const SparseMatrix& pattern() const { return pattern_; }
  [[nodiscard]] const ElementShape& shape(int e) const { return shapes_[e]; }
  [[nodiscard]] const Eigen::Matrix3d& unit_mass(int e) const { return unit_mass_[e]; }
  [[nodiscard]] const Eigen::Matrix3d& unit_stiffness(int e) const { return unit_stiffness_[e]; }

 private:
  SparseMatrix pattern_;
  std::vector<int> slots_;
  std::vector<ElementShape> shapes_;
  std::vector<Eigen::Matrix3d> unit_mass_;
  std::vector<Eigen::Matrix3d> unit_stiffness_;
};

inline SparseMatrix assemble_C(const ElementCoeffs& coeffs, const BuildModel& model) {
  return Assembler(model).assemble(coeffs.rho_c, Assembler::Kind::mass);
}

inline SparseMatrix assemble_K(const ElementCoeffs& coeffs, const BuildModel& model) {
  return Assembler(model).assemble(coeffs.k, Assembler::Kind::stiffness);
}

/// Source strength (W/mm^3) of element `e` when its layer is irradiated.
inline double element_flux(const BuildModel& model, double phi_mean, int e,
                           const ProcessParams& proc) {
  return model.is_part(e) ? proc.q
                          : proc.q * extended_factor(phi_mean, proc.w_heaviside, proc.d_void);
}

/// Consistent nodal load of the volume flux over the laser layer `stage`.
inline Vector assemble_Q(const BuildModel& model, const LevelSetField& field, int stage,
                         const ProcessParams& proc) {
  check_stage(model, stage);
  Vector Q = Vector::Zero(model.node_count());
  for (int e = 0; e < model.element_count(); ++e) {
    if (model.layer_of_element[e] != stage) continue;
    const double load = element_flux(model, element_mean_phi(model, field, e), e, proc) *
                        model.area(e) / 3.0;
    for (int n : model.elements[e]) Q[n] += load;
  }
  return Q;
}

// ---------------------------------------------------------------------------
// Implicit time step with Dirichlet elimination

enum class SolverKind { cholesky, conjugate_gradient };

/// Factorizes (C/dt + K) restricted to the free nodes once and performs any
/// number of backward-Euler steps or homogeneous solves with it. Dirichlet
/// columns are moved to the right-hand side, so the reduced matrix stays SPD
/// and the same object serves the (self-adjoint) adjoint solves.
class ImplicitStepper {
 public:
  static constexpr double residual_tolerance = 1e-10;

  ImplicitStepper(const SparseMatrix& C, const SparseMatrix& K, double dt,
                  std::span<const int> dirichlet_nodes, SolverKind kind = SolverKind::cholesky)
      : C_(C), dt_(dt), kind_(kind) {
    if (!(dt > 0.0)) throw SolverError("time step must be > 0");
    const int n = static_cast<int>(C.rows());
    if (C.cols() != n || K.rows() != n || K.cols() != n)
      throw SolverError("C and K must be square and of equal size");
    free_index_.assign(n, -1);
    std::vector<int> dirichlet_index(n, -1);
    for (int node : dirichlet_nodes) {
      if (node < 0 || node >= n) throw SolverError("Dirichlet node out of range");
      if (dirichlet_index[node] < 0) {
        dirichlet_index[node] = static_cast<int>(dirichlet_nodes_.size());
        dirichlet_nodes_.push_back(node);
      }
    }
    for (int i = 0; i < n; ++i)
      if (dirichlet_index[i] < 0) {
        free_index_[i] = static_cast<int>(free_nodes_.size());
        free_nodes_.push_back(i);
      }

    const SparseMatrix A = C / dt + K;
    std::vector<Eigen::Triplet<double>> ff;
    std::vector<Eigen::Triplet<double>> fd;
    ff.reserve(A.nonZeros());
    for (int col = 0; col < A.outerSize(); ++col)
      for (SparseMatrix::InnerIterator it(A, col); it; ++it) {
        const int fi = free_index_[it.row()];
        if (fi < 0) continue;
        if (free_index_[col] >= 0)
          ff.emplace_back(fi, free_index_[col], it.value());
        else
          fd.emplace_back(fi, dirichlet_index[col], it.value());
      }
    const auto nf = static_cast<Eigen::Index>(free_nodes_.size());
    A_ff_.resize(nf, nf);
    A_ff_.setFromTriplets(ff.begin(), ff.end());
    A_fd_.resize(nf, static_cast<Eigen::Index>(dirichlet_nodes_.size()));
    A_fd_.setFromTriplets(fd.begin(), fd.end());

    if (nf == 0) return;
    if (kind_ == SolverKind::cholesky) {
      llt_ = std::make_unique<Eigen::SimplicialLLT<SparseMatrix>>(A_ff_);
      if (llt_->info() != Eigen::Success)
        throw SolverError("Cholesky factorization failed: system is not SPD (" +
                          std::to_string(nf) + " free nodes)");
    } else {
      cg_ = std::make_unique<CG>();
      cg_->setTolerance(residual_tolerance);
      cg_->setMaxIterations(10 * nf);
      cg_->compute(A_ff_);
    }
  }

  /// T_next from (C/dt + K) T_next = C/dt T_prev + Q with T = value on the
  /// Dirichlet nodes.
  [[nodiscard]] Vector step(const Vector& T_prev, const Vector& Q, double dirichlet_value) const {
    return step(T_prev, Q, Vector::Constant(static_cast<Eigen::Index>(dirichlet_nodes_.size()),
                                            dirichlet_value));
  }

  [[nodiscard]] Vector step(const Vector& T_prev, const Vector& Q,
                            const Vector& dirichlet_values) const {
    Vector rhs = C_ * T_prev / dt_;
    if (Q.size() != 0) rhs += Q;
    Vector rhs_f(static_cast<Eigen::Index>(free_nodes_.size()));
    for (size_t i = 0; i < free_nodes_.size(); ++i) rhs_f[i] = rhs[free_nodes_[i]];
    if (A_fd_.cols() > 0) rhs_f -= A_fd_ * dirichlet_values;
    const Vector x_f = solve_reduced(rhs_f);
    Vector out(C_.rows());
    for (size_t i = 0; i < free_nodes_.size(); ++i) out[free_nodes_[i]] = x_f[i];
    for (size_t i = 0; i < dirichlet_nodes_.size(); ++i)
      out[dirichlet_nodes_[i]] = dirichlet_values[i];
    return out;
  }

  /// Solves the reduced system for the free rows of `rhs`; Dirichlet entries
  /// of the result are zero.
  [[nodiscard]] Vector solve_homogeneous(const Vector& rhs) const {
    Vector rhs_f(static_cast<Eigen::Index>(free_nodes_.size()));
    for (size_t i = 0; i < free_nodes_.size(); ++i) rhs_f[i] = rhs[free_nodes_[i]];
    const Vector x_f = solve_reduced(rhs_f);
    Vector out = Vector::Zero(C_.rows());
    for (size_t i = 0; i < free_nodes_.size(); ++i) out[free_nodes_[i]] = x_f[i];
    return out;
  }

  /// (C/dt) x
  [[nodiscard]] Vector apply_capacity(const Vector& x) const { return C_ * x / dt_; }

  [[nodiscard]] double dt() const { return dt_; }
  [[nodiscard]] const SparseMatrix& reduced_matrix() const { return A_ff_; }
  [[nodiscard]] std::span<const int> free_nodes() const { return free_nodes_; }

 private:
  using CG = Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper,
                                      Eigen::DiagonalPreconditioner<double>>;

  [[nodiscard]] Vector solve_reduced(const Vector& rhs) const {
    if (rhs.size() == 0) return rhs;
    if (!rhs.allFinite()) throw NumericsError("non-finite right-hand side");
    Vector x;
    if (kind_ == SolverKind::cholesky) {
      x = llt_->solve(rhs);
    } else {
      x = cg_->solve(rhs);
      if (cg_->info() != Eigen::Success)
        throw SolverError("conjugate gradient did not converge: " +
                          std::to_string(cg_->iterations()) + " iterations, relative residual " +
                          std::to_string(cg_->error()));
    }
    if (!x.allFinite()) throw NumericsError("non-finite temperatures");
    const double rhs_norm = rhs.norm();
    if (std::isfinite(rhs_norm) && rhs_norm > 0.0) {
      const double rel = (A_ff_ * x - rhs).norm() / rhs_norm;
      if (!(rel <= residual_tolerance))
        throw SolverError("linear solve residual " + std::to_string(rel) + " exceeds tolerance");
    }
    return x;
  }

  SparseMatrix C_;
  double dt_;
  SolverKind kind_;
  std::vector<int> free_index_;
  std::vector<int> free_nodes_;
  std::vector<int> dirichlet_nodes_;
  SparseMatrix A_ff_;
  SparseMatrix A_fd_;
  std::unique_ptr<Eigen::SimplicialLLT<SparseMatrix>> llt_;
  std::unique_ptr<CG> cg_;
};

/// One backward-Euler step of C dT/dt + K T = Q with T fixed to
/// `dirichlet_value` on `dirichlet_nodes`.
inline Vector implicit_step(const SparseMatrix& C, const SparseMatrix& K, const Vector& Q,
                            const Vector& T_prev, double dt, std::span<const int> dirichlet_nodes,
                            double dirichlet_value, SolverKind kind = SolverKind::cholesky) {
  if (T_prev.size() != C.rows()) throw SolverError("T_prev has the wrong dimension");
  return ImplicitStepper(C, K, dt, dirichlet_nodes, kind).step(T_prev, Q, dirichlet_value);
}

/// Coordinate text dump, one "row col value" line per stored entry.
inline void write_coordinate(std::ostream& out, const SparseMatrix& A) {
  out.precision(17);
  for (int col = 0; col < A.outerSize(); ++col)
    for (SparseMatrix::InnerIterator it(A, col); it; ++it)
      out << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

}  // namespace lpbf
