#pragma once

// Finite-difference differential geometry on grid-sampled metric fields.
//
// Derivatives are central (second order) wherever the stencil is complete
// and one-sided (first order) where a neighbour is masked out. Curvature is
// evaluated from the metric jet (g, dg, ddg) at each node, so interior
// nodes only read their immediate 3^n neighbourhood.

#include "hypflow/metric_field.hpp"

namespace hypflow {

/// d_p f_c for every component c, stored [p][c] per node (n * comps values).
NodeField partials(const NodeField& field);

/// d_p d_q f_c stored [p][q][c] per node. Interior nodes use the standard
/// 3-point and 4-point (mixed) stencils; boundary nodes difference the
/// first-derivative field.
NodeField second_partials(const NodeField& field);

/// Values plus first and second derivatives of a (0,2) field.
struct MetricJet {
  NodeField value;  // [i][j]
  NodeField d1;     // [p][i][j]
  NodeField d2;     // [p][q][i][j]
};

MetricJet fd_jet(const MetricField& field);

/// Christoffel symbols of the second kind and their first derivatives.
struct ChristoffelField {
  NodeField gamma;   // [k][i][j] = Gamma^k_ij
  NodeField dgamma;  // [m][k][i][j] = d_m Gamma^k_ij
};

/// Gamma^k_ij = 1/2 g^kl (d_i g_jl + d_j g_il - d_l g_ij). Throws NonSpdError
/// at the first node where the metric is singular or indefinite.
ChristoffelField christoffel(const MetricField& field);
ChristoffelField christoffel(const MetricJet& jet);

/// R^l_ijk stored [l][i][j][k].
NodeField riemann(const MetricField& field, const ChristoffelField& gamma);

/// R_ij = R^p_pij.
NodeField ricci(const NodeField& riemann);

/// R = g^ij R_ij.
NodeField scalar_curvature(const MetricField& field, const NodeField& ricci);

/// nabla_p h_ij = d_p h_ij - Gamma^q_pi h_qj - Gamma^q_pj h_iq, stored [p][i][j].
NodeField covariant_derivative(const MetricField& field, const ChristoffelField& gamma,
                               const NodeField& tensor);

/// DeTurck covector W_i = gbar^pq gbar_ij (Gamma[gbar]^j_pq - Gamma[ref]^j_pq).
NodeField deturck_vector(const MetricField& gbar, const MetricField& ref);

/// nabla_i W_j + nabla_j W_i for a covector field W (n components per node),
/// with d W taken by finite differences of the sampled field.
NodeField lie_term(const MetricField& field, const ChristoffelField& gamma,
                   const NodeField& covector);

/// |h|^2 = ref^ip ref^jq h_ij h_pq per node.
NodeField tensor_norm_sq(const NodeField& h, const MetricField& ref);

/// sqrt(det ref) * cell volume per node (hyperbolic volume element when ref
/// is the hyperbolic metric).
NodeField volume_weights(const MetricField& ref);

/// sum over nodes of |gbar - ref|^2_ref * sqrt(det ref) * h^n.
double l2_distance_sq(const MetricField& gbar, const MetricField& ref);

/// Deviation of a sampled metric from constant sectional curvature K, i.e.
/// from Ric = (n-1) K g and R = n(n-1) K, at interior nodes. Errors are
/// relative to the expected value when K != 0 and absolute when K = 0.
struct CurvatureErrors {
  NodeField ricci_error;   // max_ij per node, zero on the boundary
  NodeField scalar_error;  // per node, zero on the boundary
  double ricci_max = 0.0;
  double scalar_max = 0.0;
};
CurvatureErrors constant_curvature_errors(const MetricField& field, double K);

}  // namespace hypflow
