#pragma once

#include "currentfit/common.hpp"

#include <string>
#include <utility>
#include <vector>

namespace currentfit::ordinal {

/// One row per (subject, evaluation): an ordered categorical response, the
/// scalar covariates, and the functional feature vector z (basis
/// coefficients of the subject's current).
struct OrdinalDataset {
  std::vector<std::string> subjects;  // per row
  std::vector<int> response_labels;   // per row, values from `labels`
  MatrixX covariates;                 // n x m
  MatrixX features;                   // n x r
  std::vector<int> labels;            // category labels, strictly ascending
  std::vector<std::string> covariate_names;

  Index rows() const { return static_cast<Index>(subjects.size()); }
  int n_categories() const { return static_cast<int>(labels.size()); }
  int label_index(int label) const;

  /// Shape/range checks; returns the labels never observed (thresholds next
  /// to them are unidentified).
  std::vector<int> validate() const;
};

struct FitOptions {
  Scalar grad_tol_fixed = 1e-8;   // infinity norm
  Scalar grad_tol_mixed = 1e-6;
  int max_iterations = 200;
  int quadrature_nodes = 15;      // adaptive Gauss-Hermite; 1 = Laplace
  Scalar coef_cap = 30.0;         // separation guard on slope magnitudes
  bool fix_sigma = false;         // keep sigma_u at sigma_value (0 = none)
  Scalar sigma_value = 0.0;
  bool compute_std_errors = true;
};

struct FitInfo {
  Scalar loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  bool separated = false;
  bool sigma_boundary = false;
  VectorX std_errors;  // order: thresholds, scalar coefs, functional coefs [, sigma_u]
  std::string note;
};

/// Fitted cumulative-logit model: logit P(Y <= j) = alpha_j + eta with
/// eta = beta . covariates + b^T Gram z (+ subject intercept u when mixed).
struct OrdinalModel {
  VectorX thresholds;        // alpha, strictly increasing, size J-1
  VectorX scalar_coefs;      // beta
  VectorX functional_coefs;  // b
  MatrixX hk_gram;           // r x r Gram used in the linear predictor
  Scalar random_intercept_sd = 0.0;
  bool has_random_intercept = false;
  std::vector<int> labels;
  std::vector<std::string> covariate_names;
  FitInfo fit;
};

/// beta . covariates + b^T Gram z.
Scalar linear_predictor(const OrdinalModel& model, const VectorX& covariates, const VectorX& z);

/// Category probabilities at a fixed random-effect value (default: the prior
/// mean 0). Saturates cleanly for extreme linear predictors.
VectorX predict_probs(const OrdinalModel& model, const VectorX& covariates, const VectorX& z,
                      Scalar random_effect = 0.0);

/// Category probabilities integrated over the random intercept
/// (Gauss-Hermite with `nodes` points); equals predict_probs when the model
/// has no random intercept.
VectorX marginal_probs(const OrdinalModel& model, const VectorX& covariates, const VectorX& z,
                       int nodes = 31);

int modal_category(const VectorX& probs);

/// Maximum likelihood for the fixed-effects model by damped Newton under the
/// monotone threshold reparameterization.
OrdinalModel fit_fixed(const OrdinalDataset& data, const MatrixX& hk_gram, const FitOptions& options = {});

/// Marginal maximum likelihood with a per-subject Gaussian random intercept;
/// the inner integrals use adaptive Gauss-Hermite quadrature and the outer
/// problem is quasi-Newton over (thresholds, slopes, log sigma_u).
OrdinalModel fit_mixed(const OrdinalDataset& data, const MatrixX& hk_gram, const FitOptions& options = {});

/// Gauss-Hermite nodes and weights for weight function exp(-t^2)
/// (Golub-Welsch on the Jacobi matrix).
std::pair<VectorX, VectorX> gauss_hermite(int n);

/// Fixed-effects log-likelihood and its gradient in (alpha, beta, b) order;
/// exposed for finite-difference verification.
Scalar fixed_loglik(const OrdinalDataset& data, const MatrixX& hk_gram, const VectorX& alpha,
                    const VectorX& beta, const VectorX& b);
VectorX fixed_loglik_gradient(const OrdinalDataset& data, const MatrixX& hk_gram, const VectorX& alpha,
                              const VectorX& beta, const VectorX& b);

/// Marginal log-likelihood at given parameters (sigma >= 0); exposed for the
/// quadrature self-consistency checks.
Scalar marginal_loglik(const OrdinalDataset& data, const MatrixX& hk_gram, const VectorX& alpha,
                       const VectorX& beta, const VectorX& b, Scalar sigma, int nodes);

}  // namespace currentfit::ordinal
