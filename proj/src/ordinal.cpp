#include "currentfit/ordinal.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

namespace currentfit::ordinal {

namespace {

constexpr Scalar kSigmaZero = 1e-10;  // below this the mixture is degenerate
constexpr Scalar kSigmaFloor = 1e-4;  // boundary report threshold for sigma_u

Scalar log_sigmoid(Scalar t) {
  if (t >= 0.0) return -std::log1p(std::exp(-t));
  return t - std::log1p(std::exp(t));
}

Scalar sigmoid(Scalar t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const Scalar e = std::exp(t);
  return e / (1.0 + e);
}

// Log-probability of one observation and its derivatives with respect to the
// two cumulative logits A = alpha_y + eta (absent for the top category) and
// B = alpha_{y-1} + eta (absent for the bottom one). Ratios are formed in
// log space so extreme linear predictors saturate instead of overflowing.
struct ObsTerms {
  Scalar lp = 0, dA = 0, dB = 0, hAA = 0, hBB = 0, hAB = 0;
};

ObsTerms obs_terms(Scalar A, Scalar B, bool has_upper, bool has_lower) {
  ObsTerms t;
  if (has_upper && !has_lower) {
    const Scalar sA = sigmoid(A);
    t.lp = log_sigmoid(A);
    t.dA = sigmoid(-A);
    t.hAA = -sA * t.dA;
  } else if (!has_upper && has_lower) {
    const Scalar sB = sigmoid(B);
    t.lp = log_sigmoid(-B);
    t.dB = -sB;
    t.hBB = -sB * sigmoid(-B);
  } else if (has_upper && has_lower) {
    const Scalar lsA = log_sigmoid(A), lsmA = log_sigmoid(-A);
    const Scalar lsB = log_sigmoid(B), lsmB = log_sigmoid(-B);
    const Scalar lem = std::log(-std::expm1(B - A));
    t.lp = lsA + lsmB + lem;
    const Scalar rA = std::exp(lsmA - lsmB - lem);  // sigma'(A) / P
    const Scalar rB = std::exp(lsB - lsA - lem);    // sigma'(B) / P
    const Scalar sA = std::exp(lsA), sB = std::exp(lsB);
    t.dA = rA;
    t.dB = -rB;
    t.hAA = rA * (1.0 - 2.0 * sA) - rA * rA;
    t.hBB = -rB * (1.0 - 2.0 * sB) - rB * rB;
    t.hAB = rA * rB;
  }
  return t;
}

// Canonically ordered design: rows sorted by (subject, covariates, features,
// response) so that accumulation order, and therefore every fitted number,
// is independent of the input row order. Subject blocks are contiguous.
struct Workspace {
  MatrixX design;  // n x (m + r); feature block pre-multiplied by the Gram
  std::vector<int> y;
  std::vector<Index> group_offsets;  // size n_groups + 1
  std::vector<std::string> group_ids;
  int J = 0;
  Index m = 0, r = 0;

  Index n() const { return design.rows(); }
  Index q() const { return design.cols(); }
  Index n_groups() const { return static_cast<Index>(group_ids.size()); }
};

Workspace make_workspace(const OrdinalDataset& data, const MatrixX& hk_gram) {
  const Index n = data.rows();
  const Index m = data.covariates.cols();
  const Index r = data.features.cols();
  MatrixX gram = hk_gram;
  if (gram.size() == 0) gram = MatrixX::Identity(r, r);
  if (gram.rows() != r || gram.cols() != r)
    throw DataError("hk_gram shape does not match the feature length");

  std::vector<Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  auto row_less = [&](Index a, Index b) {
    if (data.subjects[a] != data.subjects[b]) return data.subjects[a] < data.subjects[b];
    for (Index c = 0; c < m; ++c)
      if (data.covariates(a, c) != data.covariates(b, c)) return data.covariates(a, c) < data.covariates(b, c);
    for (Index c = 0; c < r; ++c)
      if (data.features(a, c) != data.features(b, c)) return data.features(a, c) < data.features(b, c);
    return data.response_labels[a] < data.response_labels[b];
  };
  std::sort(order.begin(), order.end(), row_less);

  Workspace ws;
  ws.J = data.n_categories();
  ws.m = m;
  ws.r = r;
  ws.design.resize(n, m + r);
  ws.y.resize(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const Index src = order[static_cast<size_t>(i)];
    ws.design.row(i).head(m) = data.covariates.row(src);
    ws.design.row(i).tail(r) = data.features.row(src) * gram.transpose();
    ws.y[static_cast<size_t>(i)] = data.label_index(data.response_labels[static_cast<size_t>(src)]);
  }
  for (Index i = 0; i < n; ++i) {
    const std::string& id = data.subjects[static_cast<size_t>(order[static_cast<size_t>(i)])];
    if (ws.group_ids.empty() || ws.group_ids.back() != id) {
      ws.group_ids.push_back(id);
      ws.group_offsets.push_back(i);
    }
  }
  ws.group_offsets.push_back(n);
  return ws;
}

VectorX alpha_from_theta(const VectorX& theta) {
  VectorX alpha(theta.size());
  if (theta.size() == 0) return alpha;
  alpha[0] = theta[0];
  for (Index j = 1; j < theta.size(); ++j) alpha[j] = alpha[j - 1] + std::exp(theta[j]);
  return alpha;
}

VectorX theta_from_alpha(const VectorX& alpha) {
  VectorX theta(alpha.size());
  if (alpha.size() == 0) return theta;
  theta[0] = alpha[0];
  for (Index j = 1; j < alpha.size(); ++j) {
    const Scalar gap = alpha[j] - alpha[j - 1];
    if (!(gap > 0.0)) throw DataError("thresholds must be strictly increasing");
    theta[j] = std::log(gap);
  }
  return theta;
}

// Log-likelihood with optional gradient / Hessian in (alpha, gamma) space.
Scalar eval_alpha_space(const Workspace& ws, const VectorX& alpha, const VectorX& gamma,
                        VectorX* grad, MatrixX* hess) {
  const Index na = alpha.size();
  const Index q = ws.q();
  const Index dim = na + q;
  if (grad) grad->setZero(dim);
  if (hess) hess->setZero(dim, dim);
  const VectorX eta = ws.design * gamma;
  Scalar ll = 0.0;
  for (Index i = 0; i < ws.n(); ++i) {
    const int y = ws.y[static_cast<size_t>(i)];
    const bool has_upper = y <= ws.J - 2;
    const bool has_lower = y >= 1;
    const Scalar A = has_upper ? alpha[y] + eta[i] : 0.0;
    const Scalar B = has_lower ? alpha[y - 1] + eta[i] : 0.0;
    const ObsTerms t = obs_terms(A, B, has_upper, has_lower);
    ll += t.lp;
    if (!grad && !hess) continue;
    const Scalar d_eta = t.dA + t.dB;
    if (grad) {
      if (has_upper) (*grad)[y] += t.dA;
      if (has_lower) (*grad)[y - 1] += t.dB;
      grad->tail(q) += d_eta * ws.design.row(i).transpose();
    }
    if (hess) {
      const auto x = ws.design.row(i);
      if (has_upper) {
        (*hess)(y, y) += t.hAA;
        hess->row(y).tail(q) += (t.hAA + t.hAB) * x;
      }
      if (has_lower) {
        (*hess)(y - 1, y - 1) += t.hBB;
        hess->row(y - 1).tail(q) += (t.hBB + t.hAB) * x;
      }
      if (has_upper && has_lower) {
        (*hess)(y, y - 1) += t.hAB;
        (*hess)(y - 1, y) += t.hAB;
      }
      hess->bottomRightCorner(q, q).noalias() +=
          (t.hAA + t.hBB + 2.0 * t.hAB) * (x.transpose() * x);
    }
  }
  if (hess)
    for (Index j = 0; j < na; ++j) hess->col(j).tail(q) = hess->row(j).tail(q).transpose();
  return ll;
}

// Chains (alpha, gamma) derivatives into the reparameterized theta space
// (alpha_0 = theta_0, alpha_j = alpha_{j-1} + exp(theta_j)).
void chain_to_theta(const VectorX& theta, const VectorX& g_ag, const MatrixX* h_ag,
                    VectorX& g_out, MatrixX* h_out, Index q) {
  const Index na = theta.size();
  MatrixX jac = MatrixX::Zero(na, na);
  for (Index j = 0; j < na; ++j) {
    jac(j, 0) = 1.0;
    for (Index k = 1; k <= j; ++k) jac(j, k) = std::exp(theta[k]);
  }
  g_out.resize(na + q);
  g_out.head(na) = jac.transpose() * g_ag.head(na);
  g_out.tail(q) = g_ag.tail(q);
  if (!h_out) return;
  h_out->setZero(na + q, na + q);
  h_out->topLeftCorner(na, na) = jac.transpose() * h_ag->topLeftCorner(na, na) * jac;
  for (Index k = 1; k < na; ++k) {
    Scalar pull = 0.0;
    for (Index j = k; j < na; ++j) pull += g_ag[j];
    (*h_out)(k, k) += std::exp(theta[k]) * pull;
  }
  h_out->topRightCorner(na, q) = jac.transpose() * h_ag->topRightCorner(na, q);
  h_out->bottomLeftCorner(q, na) = h_out->topRightCorner(na, q).transpose();
  h_out->bottomRightCorner(q, q) = h_ag->bottomRightCorner(q, q);
}

VectorX start_thresholds(const Workspace& ws) {
  VectorX counts = VectorX::Zero(ws.J);
  for (int yi : ws.y) counts[yi] += 1.0;
  VectorX cum(ws.J - 1);
  Scalar acc = 0.0;
  const Scalar total = static_cast<Scalar>(ws.n());
  for (Index j = 0; j + 1 < ws.J; ++j) {
    acc += counts[j];
    const Scalar p = std::clamp(acc / total, 1e-3, 1.0 - 1e-3);
    cum[j] = std::log(p / (1.0 - p));
  }
  for (Index j = 1; j + 1 < ws.J; ++j)
    if (cum[j] <= cum[j - 1]) cum[j] = cum[j - 1] + 1e-3;
  return cum;
}

struct NewtonResult {
  VectorX theta, gamma;
  Scalar loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  bool separated = false;
};

NewtonResult newton_fixed(const Workspace& ws, const FitOptions& options) {
  const Index na = ws.J - 1;
  const Index q = ws.q();
  NewtonResult res;
  res.theta = theta_from_alpha(start_thresholds(ws));
  res.gamma = VectorX::Zero(q);

  VectorX g_ag(na + q), grad;
  MatrixX h_ag(na + q, na + q), hess;
  Scalar ll = eval_alpha_space(ws, alpha_from_theta(res.theta), res.gamma, &g_ag, &h_ag);
  for (int it = 0; it < options.max_iterations; ++it) {
    res.iterations = it;
    chain_to_theta(res.theta, g_ag, &h_ag, grad, &hess, q);
    if (grad.lpNorm<Eigen::Infinity>() <= options.grad_tol_fixed) {
      res.converged = true;
      break;
    }
    if (q > 0 && res.gamma.lpNorm<Eigen::Infinity>() >= options.coef_cap) {
      res.separated = true;
      break;
    }
    MatrixX neg_h = -hess;
    Scalar ridge = 0.0;
    VectorX step;
    for (int attempt = 0; attempt < 60; ++attempt) {
      MatrixX damped = neg_h;
      damped.diagonal().array() += ridge;
      Eigen::LDLT<MatrixX> solver(damped);
      if (solver.info() == Eigen::Success) {
        step = solver.solve(grad);
        if (step.allFinite() && step.dot(grad) > 0.0) break;
      }
      step.resize(0);
      ridge = ridge == 0.0 ? 1e-8 * (1.0 + neg_h.diagonal().cwiseAbs().maxCoeff()) : ridge * 10.0;
    }
    if (step.size() == 0) break;

    Scalar t = 1.0;
    bool accepted = false;
    for (int half = 0; half < 40; ++half, t *= 0.5) {
      const VectorX theta_new = res.theta + t * step.head(na);
      const VectorX gamma_new = res.gamma + t * step.tail(q);
      const Scalar ll_new = eval_alpha_space(ws, alpha_from_theta(theta_new), gamma_new, &g_ag, &h_ag);
      if (std::isfinite(ll_new) && ll_new >= ll) {
        res.theta = theta_new;
        res.gamma = gamma_new;
        ll = ll_new;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      ll = eval_alpha_space(ws, alpha_from_theta(res.theta), res.gamma, &g_ag, &h_ag);
      break;
    }
  }
  if (!res.converged && q > 0 && res.gamma.lpNorm<Eigen::Infinity>() >= options.coef_cap)
    res.separated = true;
  res.loglik = ll;
  return res;
}

// ---- random-intercept machinery -------------------------------------------

// Joint log-density of one subject block at intercept u: observation terms
// plus the N(0, sigma^2) prior. Optionally returns d/du and d2/du2.
Scalar subject_joint(const Workspace& ws, Index g, const VectorX& alpha, const VectorX& eta, Scalar u,
                     Scalar sigma, Scalar* d1 = nullptr, Scalar* d2 = nullptr) {
  Scalar lp = -0.5 * u * u / (sigma * sigma) - std::log(sigma) - 0.5 * std::log(2.0 * M_PI);
  Scalar g1 = -u / (sigma * sigma);
  Scalar g2 = -1.0 / (sigma * sigma);
  for (Index i = ws.group_offsets[static_cast<size_t>(g)]; i < ws.group_offsets[static_cast<size_t>(g) + 1]; ++i) {
    const int y = ws.y[static_cast<size_t>(i)];
    const bool has_upper = y <= ws.J - 2;
    const bool has_lower = y >= 1;
    const Scalar A = has_upper ? alpha[y] + eta[i] + u : 0.0;
    const Scalar B = has_lower ? alpha[y - 1] + eta[i] + u : 0.0;
    const ObsTerms t = obs_terms(A, B, has_upper, has_lower);
    lp += t.lp;
    g1 += t.dA + t.dB;
    g2 += t.hAA + t.hBB + 2.0 * t.hAB;
  }
  if (d1) *d1 = g1;
  if (d2) *d2 = g2;
  return lp;
}

// Adaptive Gauss-Hermite marginal log-likelihood of one subject. The
// integrand is strictly log-concave in u, so the conditional mode is found
// by unguarded Newton.
Scalar subject_marginal(const Workspace& ws, Index g, const VectorX& alpha, const VectorX& eta,
                        Scalar sigma, const VectorX& nodes, const VectorX& weights) {
  if (sigma < kSigmaZero) {
    Scalar lp = 0.0;
    for (Index i = ws.group_offsets[static_cast<size_t>(g)]; i < ws.group_offsets[static_cast<size_t>(g) + 1]; ++i) {
      const int y = ws.y[static_cast<size_t>(i)];
      const bool has_upper = y <= ws.J - 2;
      const bool has_lower = y >= 1;
      const Scalar A = has_upper ? alpha[y] + eta[i] : 0.0;
      const Scalar B = has_lower ? alpha[y - 1] + eta[i] : 0.0;
      lp += obs_terms(A, B, has_upper, has_lower).lp;
    }
    return lp;
  }
  Scalar u = 0.0, d1 = 0.0, d2 = -1.0;
  subject_joint(ws, g, alpha, eta, u, sigma, &d1, &d2);
  for (int it = 0; it < 100; ++it) {
    u -= d1 / d2;
    subject_joint(ws, g, alpha, eta, u, sigma, &d1, &d2);
    if (std::abs(d1) <= 1e-11 * (1.0 + std::abs(u))) break;
  }
  const Scalar tau = 1.0 / std::sqrt(-d2);
  VectorX vals(nodes.size());
  for (Index qi = 0; qi < nodes.size(); ++qi) {
    const Scalar t = nodes[qi];
    vals[qi] = std::log(weights[qi]) + t * t +
               subject_joint(ws, g, alpha, eta, u + M_SQRT2 * tau * t, sigma);
  }
  const Scalar vmax = vals.maxCoeff();
  Scalar sum = 0.0;
  for (Index qi = 0; qi < vals.size(); ++qi) sum += std::exp(vals[qi] - vmax);
  return 0.5 * std::log(2.0) + std::log(tau) + vmax + std::log(sum);
}

Scalar marginal_loglik_ws(const Workspace& ws, const VectorX& alpha, const VectorX& gamma, Scalar sigma,
                          const VectorX& nodes, const VectorX& weights) {
  const VectorX eta = ws.design * gamma;
  Scalar ll = 0.0;
  for (Index g = 0; g < ws.n_groups(); ++g)
    ll += subject_marginal(ws, g, alpha, eta, sigma, nodes, weights);
  return ll;
}

VectorX fd_gradient(const std::function<Scalar(const VectorX&)>& f, const VectorX& x, Scalar rel_h) {
  VectorX grad(x.size());
  VectorX p = x;
  for (Index i = 0; i < x.size(); ++i) {
    const Scalar h = rel_h * (1.0 + std::abs(x[i]));
    p[i] = x[i] + h;
    const Scalar fp = f(p);
    p[i] = x[i] - h;
    const Scalar fm = f(p);
    p[i] = x[i];
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

struct BfgsResult {
  VectorX x;
  Scalar f = 0.0;
  VectorX grad;
  int iterations = 0;
  bool converged = false;
};

BfgsResult bfgs_minimize(const std::function<Scalar(const VectorX&)>& f, const VectorX& x0,
                         Scalar grad_tol, int max_iterations) {
  BfgsResult res;
  res.x = x0;
  res.f = f(res.x);
  res.grad = fd_gradient(f, res.x, 1e-6);
  const Index dim = x0.size();
  MatrixX binv = MatrixX::Identity(dim, dim);
  bool scaled = false;
  for (int it = 0; it < max_iterations; ++it) {
    res.iterations = it;
    if (res.grad.lpNorm<Eigen::Infinity>() <= grad_tol) {
      res.converged = true;
      return res;
    }
    VectorX dir = -(binv * res.grad);
    if (!(dir.dot(res.grad) < 0.0)) {
      binv.setIdentity();
      dir = -res.grad;
    }
    const Scalar slope = dir.dot(res.grad);
    Scalar t = 1.0;
    VectorX x_new;
    Scalar f_new = std::numeric_limits<Scalar>::infinity();
    bool accepted = false;
    for (int half = 0; half < 60; ++half, t *= 0.5) {
      x_new = res.x + t * dir;
      f_new = f(x_new);
      if (std::isfinite(f_new) && f_new <= res.f + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) return res;
    const VectorX g_new = fd_gradient(f, x_new, 1e-6);
    const VectorX s = x_new - res.x;
    const VectorX yv = g_new - res.grad;
    const Scalar sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      if (!scaled) {
        binv *= sy / yv.squaredNorm();
        scaled = true;
      }
      const MatrixX eye = MatrixX::Identity(dim, dim);
      const MatrixX left = eye - (s * yv.transpose()) / sy;
      binv = left * binv * left.transpose() + (s * s.transpose()) / sy;
    }
    res.x = x_new;
    res.f = f_new;
    res.grad = g_new;
  }
  res.converged = res.grad.lpNorm<Eigen::Infinity>() <= grad_tol;
  return res;
}

MatrixX fd_hessian(const std::function<Scalar(const VectorX&)>& f, const VectorX& x, Scalar rel_h) {
  const Index dim = x.size();
  MatrixX hess(dim, dim);
  VectorX h(dim);
  for (Index i = 0; i < dim; ++i) h[i] = rel_h * (1.0 + std::abs(x[i]));
  const Scalar f0 = f(x);
  VectorX p = x;
  for (Index i = 0; i < dim; ++i) {
    p[i] = x[i] + h[i];
    const Scalar fp = f(p);
    p[i] = x[i] - h[i];
    const Scalar fm = f(p);
    p[i] = x[i];
    hess(i, i) = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
  }
  for (Index i = 0; i < dim; ++i)
    for (Index j = i + 1; j < dim; ++j) {
      p[i] = x[i] + h[i];
      p[j] = x[j] + h[j];
      const Scalar fpp = f(p);
      p[j] = x[j] - h[j];
      const Scalar fpm = f(p);
      p[i] = x[i] - h[i];
      const Scalar fmm = f(p);
      p[j] = x[j] + h[j];
      const Scalar fmp = f(p);
      p[i] = x[i];
      p[j] = x[j];
      hess(i, j) = hess(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
    }
  return hess;
}

VectorX se_from_information(const MatrixX& info) {
  const Index dim = info.rows();
  VectorX se = VectorX::Constant(dim, std::numeric_limits<Scalar>::quiet_NaN());
  Eigen::LDLT<MatrixX> solver(info);
  if (solver.info() != Eigen::Success) return se;
  const MatrixX cov = solver.solve(MatrixX::Identity(dim, dim));
  for (Index i = 0; i < dim; ++i)
    if (cov(i, i) > 0.0) se[i] = std::sqrt(cov(i, i));
  return se;
}

OrdinalModel assemble_model(const OrdinalDataset& data, const Workspace& ws, const MatrixX& hk_gram,
                            const VectorX& alpha, const VectorX& gamma) {
  OrdinalModel model;
  model.thresholds = alpha;
  model.scalar_coefs = gamma.head(ws.m);
  model.functional_coefs = gamma.tail(ws.r);
  model.hk_gram = hk_gram.size() == 0 ? MatrixX(MatrixX::Identity(ws.r, ws.r)) : hk_gram;
  model.labels = data.labels;
  model.covariate_names = data.covariate_names;
  return model;
}

void require_all_categories(const OrdinalDataset& data) {
  const auto missing = data.validate();
  if (!missing.empty()) {
    std::string what = "response categories never observed:";
    for (int lbl : missing) what += " " + std::to_string(lbl);
    throw DataError(what);
  }
}

}  // namespace

int OrdinalDataset::label_index(int label) const {
  for (size_t j = 0; j < labels.size(); ++j)
    if (labels[j] == label) return static_cast<int>(j);
  throw DataError("response label " + std::to_string(label) + " outside the category set");
}

std::vector<int> OrdinalDataset::validate() const {
  const Index n = rows();
  if (static_cast<Index>(response_labels.size()) != n || covariates.rows() != n || features.rows() != n)
    throw DataError("dataset columns disagree on the number of rows");
  if (labels.size() < 2) throw DataError("at least two response categories required");
  for (size_t j = 1; j < labels.size(); ++j)
    if (labels[j] <= labels[j - 1]) throw DataError("category labels must be strictly ascending");
  std::vector<bool> seen(labels.size(), false);
  for (int lbl : response_labels) seen[static_cast<size_t>(label_index(lbl))] = true;
  std::vector<int> missing;
  for (size_t j = 0; j < labels.size(); ++j)
    if (!seen[j]) missing.push_back(labels[j]);
  return missing;
}

Scalar linear_predictor(const OrdinalModel& model, const VectorX& covariates, const VectorX& z) {
  if (covariates.size() != model.scalar_coefs.size()) throw DataError("covariate length mismatch");
  if (z.size() != model.functional_coefs.size()) throw DataError("feature length mismatch");
  Scalar eta = model.scalar_coefs.dot(covariates);
  if (z.size() > 0) eta += model.functional_coefs.dot(model.hk_gram * z);
  return eta;
}

VectorX predict_probs(const OrdinalModel& model, const VectorX& covariates, const VectorX& z,
                      Scalar random_effect) {
  const int J = static_cast<int>(model.labels.size());
  const Scalar eta = linear_predictor(model, covariates, z) + random_effect;
  VectorX probs(J);
  Scalar prev = 0.0;
  for (int j = 0; j < J - 1; ++j) {
    const Scalar c = sigmoid(model.thresholds[j] + eta);
    probs[j] = c - prev;
    prev = c;
  }
  probs[J - 1] = 1.0 - prev;
  return probs;
}

VectorX marginal_probs(const OrdinalModel& model, const VectorX& covariates, const VectorX& z, int nodes) {
  if (!model.has_random_intercept || model.random_intercept_sd < kSigmaZero)
    return predict_probs(model, covariates, z);
  const auto [t, w] = gauss_hermite(nodes);
  VectorX probs = VectorX::Zero(static_cast<Index>(model.labels.size()));
  for (Index qi = 0; qi < t.size(); ++qi)
    probs += w[qi] * predict_probs(model, covariates, z, M_SQRT2 * model.random_intercept_sd * t[qi]);
  return probs / std::sqrt(M_PI);
}

int modal_category(const VectorX& probs) {
  Index best = 0;
  probs.maxCoeff(&best);
  return static_cast<int>(best);
}

std::pair<VectorX, VectorX> gauss_hermite(int n) {
  if (n < 1) throw ConfigError("quadrature needs at least one node");
  if (n == 1) return {VectorX::Zero(1), VectorX::Constant(1, std::sqrt(M_PI))};
  MatrixX jacobi = MatrixX::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    const Scalar b = std::sqrt(i / 2.0);
    jacobi(i, i - 1) = b;
    jacobi(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<MatrixX> solver(jacobi);
  VectorX nodes = solver.eigenvalues();
  VectorX weights(n);
  for (int i = 0; i < n; ++i) {
    const Scalar v = solver.eigenvectors()(0, i);
    weights[i] = std::sqrt(M_PI) * v * v;
  }
  return {nodes, weights};
}

Scalar fixed_loglik(const OrdinalDataset& data, const MatrixX& hk_gram, const VectorX& alpha,
                    const VectorX& beta, const VectorX& b) {
  const Workspace ws = make_workspace(data, hk_gram);
  VectorX gamma(ws.q());
  gamma << beta, b;
  return eval_alpha_space(ws, alpha, gamma, nullptr, nullptr);
}

VectorX fixed_loglik_gradient(const OrdinalDataset& data, const MatrixX& hk_gram, const VectorX& alpha,
                              const VectorX& beta, const VectorX& b) {
  const Workspace ws = make_workspace(data, hk_gram);
  VectorX gamma(ws.q());
  gamma << beta, b;
  VectorX grad(alpha.size() + ws.q());
  eval_alpha_space(ws, alpha, gamma, &grad, nullptr);
  return grad;
}

Scalar marginal_loglik(const OrdinalDataset& data, const MatrixX& hk_gram, const VectorX& alpha,
                       const VectorX& beta, const VectorX& b, Scalar sigma, int nodes) {
  const Workspace ws = make_workspace(data, hk_gram);
  VectorX gamma(ws.q());
  gamma << beta, b;
  const auto [t, w] = gauss_hermite(nodes);
  return marginal_loglik_ws(ws, alpha, gamma, sigma, t, w);
}

OrdinalModel fit_fixed(const OrdinalDataset& data, const MatrixX& hk_gram, const FitOptions& options) {
  require_all_categories(data);
  const Workspace ws = make_workspace(data, hk_gram);
  const NewtonResult res = newton_fixed(ws, options);
  const VectorX alpha = alpha_from_theta(res.theta);
  OrdinalModel model = assemble_model(data, ws, hk_gram, alpha, res.gamma);
  model.fit.loglik = res.loglik;
  model.fit.iterations = res.iterations;
  model.fit.converged = res.converged;
  model.fit.separated = res.separated;
  if (res.separated)
    model.fit.note = "complete separation detected: likelihood unbounded, coefficients at cap";
  if (options.compute_std_errors && !res.separated) {
    const Index dim = alpha.size() + ws.q();
    VectorX grad(dim);
    MatrixX hess(dim, dim);
    eval_alpha_space(ws, alpha, res.gamma, &grad, &hess);
    model.fit.std_errors = se_from_information(-hess);
  }
  return model;
}

OrdinalModel fit_mixed(const OrdinalDataset& data, const MatrixX& hk_gram, const FitOptions& options) {
  require_all_categories(data);
  const Workspace ws = make_workspace(data, hk_gram);

  Index subjects_with_replicates = 0;
  for (Index g = 0; g < ws.n_groups(); ++g)
    if (ws.group_offsets[static_cast<size_t>(g) + 1] - ws.group_offsets[static_cast<size_t>(g)] >= 2)
      ++subjects_with_replicates;
  if (ws.n_groups() < 2 || subjects_with_replicates < 2) {
    OrdinalModel model = fit_fixed(data, hk_gram, options);
    model.fit.note =
        "random intercept unidentified (need >= 2 subjects with >= 2 observations); "
        "fixed-effects fit returned";
    return model;
  }

  const auto [nodes, weights] = gauss_hermite(options.quadrature_nodes);
  const Index na = ws.J - 1;
  const Index q = ws.q();
  const NewtonResult start = newton_fixed(ws, options);

  const bool fixed_sigma = options.fix_sigma;
  const Scalar sigma_fixed_value = options.sigma_value;
  auto objective = [&](const VectorX& p) -> Scalar {
    const VectorX alpha = alpha_from_theta(p.head(na));
    const VectorX gamma = p.segment(na, q);
    const Scalar sigma = fixed_sigma ? sigma_fixed_value : std::exp(p[na + q]);
    return -marginal_loglik_ws(ws, alpha, gamma, sigma, nodes, weights);
  };

  VectorX p0(na + q + (fixed_sigma ? 0 : 1));
  p0.head(na) = start.theta;
  p0.segment(na, q) = start.gamma;
  if (!fixed_sigma) p0[na + q] = std::log(0.5);

  const BfgsResult opt = bfgs_minimize(objective, p0, options.grad_tol_mixed, options.max_iterations);

  const VectorX alpha = alpha_from_theta(opt.x.head(na));
  const VectorX gamma = opt.x.segment(na, q);
  const Scalar sigma = fixed_sigma ? sigma_fixed_value : std::exp(opt.x[na + q]);

  OrdinalModel model = assemble_model(data, ws, hk_gram, alpha, gamma);
  model.has_random_intercept = true;
  model.random_intercept_sd = sigma;
  model.fit.loglik = -opt.f;
  model.fit.iterations = opt.iterations;
  model.fit.converged = opt.converged;
  model.fit.separated = q > 0 && gamma.lpNorm<Eigen::Infinity>() >= options.coef_cap;
  if (!fixed_sigma && sigma <= kSigmaFloor) {
    model.fit.sigma_boundary = true;
    model.fit.note = "sigma_u collapsed to the boundary; the fit equals the fixed-effects model";
  }

  if (options.compute_std_errors && !model.fit.separated) {
    const bool with_sigma = !fixed_sigma && !model.fit.sigma_boundary;
    auto report_nll = [&](const VectorX& p) -> Scalar {
      const VectorX a = p.head(na);
      for (Index j = 1; j < na; ++j)
        if (!(a[j] > a[j - 1])) return std::numeric_limits<Scalar>::infinity();
      const VectorX g = p.segment(na, q);
      const Scalar s = with_sigma ? std::exp(p[na + q]) : sigma;
      return -marginal_loglik_ws(ws, a, g, s, nodes, weights);
    };
    VectorX at(na + q + (with_sigma ? 1 : 0));
    at.head(na) = alpha;
    at.segment(na, q) = gamma;
    if (with_sigma) at[na + q] = std::log(sigma);
    const VectorX se = se_from_information(fd_hessian(report_nll, at, 1e-4));
    model.fit.std_errors.resize(na + q + 1);
    model.fit.std_errors.head(na + q) = se.head(na + q);
    // delta method: se(sigma) = sigma * se(log sigma)
    model.fit.std_errors[na + q] =
        with_sigma ? sigma * se[na + q] : std::numeric_limits<Scalar>::quiet_NaN();
  }
  return model;
}

}  // namespace currentfit::ordinal
