#pragma once

// Node-local tensor algebra shared by the curvature and flow code. All
// arrays are dense with the first index slowest; n <= kMaxDim.

#include <cmath>

namespace hypflow::detail {

inline constexpr int kMaxDim = 4;

/// Inverse (and optionally determinant) of an SPD matrix by Cholesky.
/// Returns false if a pivot is not strictly positive or not finite.
inline bool spd_inverse(const double* g, int n, double* inv, double* det = nullptr) {
  double L[kMaxDim * kMaxDim] = {};
  double d = 1.0;
  for (int j = 0; j < n; ++j) {
    double s = g[j * n + j];
    for (int k = 0; k < j; ++k) s -= L[j * n + k] * L[j * n + k];
    if (!(s > 0.0) || !std::isfinite(s)) return false;
    const double ljj = std::sqrt(s);
    L[j * n + j] = ljj;
    d *= s;
    for (int i = j + 1; i < n; ++i) {
      double t = g[i * n + j];
      for (int k = 0; k < j; ++k) t -= L[i * n + k] * L[j * n + k];
      L[i * n + j] = t / ljj;
    }
  }
  // inv = L^{-T} L^{-1}; first Linv (lower triangular).
  double Li[kMaxDim * kMaxDim] = {};
  for (int j = 0; j < n; ++j) {
    Li[j * n + j] = 1.0 / L[j * n + j];
    for (int i = j + 1; i < n; ++i) {
      double s = 0.0;
      for (int k = j; k < i; ++k) s -= L[i * n + k] * Li[k * n + j];
      Li[i * n + j] = s / L[i * n + i];
    }
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int k = (i > j ? i : j); k < n; ++k) s += Li[k * n + i] * Li[k * n + j];
      inv[i * n + j] = s;
    }
  if (det) *det = d;
  return true;
}

/// Levi-Civita connection data of a metric jet at one node.
struct NodeConnection {
  double ginv[kMaxDim * kMaxDim];
  double dginv[kMaxDim * kMaxDim * kMaxDim];        // [m][k][l] = d_m g^{kl}
  double gamma[kMaxDim * kMaxDim * kMaxDim];        // [k][i][j] = Gamma^k_ij
  double dgamma[kMaxDim * kMaxDim * kMaxDim * kMaxDim];  // [m][k][i][j]
};

/// g: [i][j], dg: [p][i][j] = d_p g_ij, ddg: [p][q][i][j] = d_p d_q g_ij.
/// Returns false if g is not SPD.
inline bool node_connection(int n, const double* g, const double* dg, const double* ddg,
                            NodeConnection& c) {
  if (!spd_inverse(g, n, c.ginv)) return false;
  const int n2 = n * n, n3 = n2 * n;
  for (int m = 0; m < n; ++m)
    for (int k = 0; k < n; ++k)
      for (int l = 0; l < n; ++l) {
        double s = 0.0;
        for (int a = 0; a < n; ++a)
          for (int b = 0; b < n; ++b)
            s += c.ginv[k * n + a] * dg[m * n2 + a * n + b] * c.ginv[b * n + l];
        c.dginv[m * n2 + k * n + l] = -s;
      }
  // First-kind symbols T[i][j][l] = 1/2 (d_i g_jl + d_j g_il - d_l g_ij).
  double T[kMaxDim * kMaxDim * kMaxDim];
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l)
        T[i * n2 + j * n + l] =
            0.5 * (dg[i * n2 + j * n + l] + dg[j * n2 + i * n + l] - dg[l * n2 + i * n + j]);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int l = 0; l < n; ++l) s += c.ginv[k * n + l] * T[i * n2 + j * n + l];
        c.gamma[k * n2 + i * n + j] = s;
      }
  if (ddg == nullptr) return true;
  for (int m = 0; m < n; ++m)
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          double s = 0.0;
          for (int l = 0; l < n; ++l) {
            const double dT = 0.5 * (ddg[m * n3 + i * n2 + j * n + l] +
                                     ddg[m * n3 + j * n2 + i * n + l] -
                                     ddg[m * n3 + l * n2 + i * n + j]);
            s += c.dginv[m * n2 + k * n + l] * T[i * n2 + j * n + l] +
                 c.ginv[k * n + l] * dT;
          }
          c.dgamma[m * n3 + k * n2 + i * n + j] = s;
        }
  return true;
}

/// R^l_ijk = d_i G^l_jk - d_j G^l_ik + G^p_jk G^l_ip - G^p_ik G^l_jp,
/// stored [l][i][j][k].
inline void node_riemann(int n, const NodeConnection& c, double* R) {
  const int n2 = n * n, n3 = n2 * n;
  for (int l = 0; l < n; ++l)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
          double s = c.dgamma[i * n3 + l * n2 + j * n + k] - c.dgamma[j * n3 + l * n2 + i * n + k];
          for (int p = 0; p < n; ++p)
            s += c.gamma[p * n2 + j * n + k] * c.gamma[l * n2 + i * n + p] -
                 c.gamma[p * n2 + i * n + k] * c.gamma[l * n2 + j * n + p];
          R[l * n3 + i * n2 + j * n + k] = s;
        }
}

/// R_ij = R^p_pij.
inline void node_ricci(int n, const NodeConnection& c, double* ric) {
  const int n2 = n * n, n3 = n2 * n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < n; ++p) {
        s += c.dgamma[p * n3 + p * n2 + i * n + j] - c.dgamma[i * n3 + p * n2 + p * n + j];
        for (int q = 0; q < n; ++q)
          s += c.gamma[q * n2 + i * n + j] * c.gamma[p * n2 + p * n + q] -
               c.gamma[q * n2 + p * n + j] * c.gamma[p * n2 + i * n + q];
      }
      ric[i * n + j] = s;
    }
}

}  // namespace hypflow::detail
