#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "spar/errors.hpp"

namespace spar {

/// Options for the simplex-constrained least-squares solver.  Tolerances
/// are relative; the solver scales them by (1 + |y|^2) of the problem it is
/// given.
struct SimplexQpOptions {
    double kkt_rel_tol = 1e-8;
    double ridge_factor = 1e-10;   // ridge = factor * trace(G_face) on singular faces
    int max_active_set_iters = 0;  // 0: 10*q*q + 20
    int max_pg_iters = 100000;     // projected-gradient fallback cap
};

struct SimplexQpResult {
    std::vector<double> weights;
    double objective = 0.0;     // quadratic-form SSE at weights, clamped at 0
    double kkt_residual = 0.0;  // max KKT violation / (1 + |y|^2)
    bool regularized = false;   // a face system needed ridge regularization
    bool fallback = false;      // projected gradient finished the job
    int iterations = 0;
};

namespace detail {

/// Euclidean projection onto the probability simplex (Held et al.).
inline void project_simplex(Eigen::VectorXd& v) {
    const Eigen::Index q = v.size();
    std::vector<double> u(v.data(), v.data() + q);
    std::sort(u.begin(), u.end(), std::greater<double>());
    double cum = 0.0, theta = 0.0;
    std::size_t rho = 0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        cum += u[j];
        const double candidate = (cum - 1.0) / static_cast<double>(j + 1);
        if (u[j] - candidate > 0.0) {
            rho = j + 1;
            theta = candidate;
        }
    }
    (void)rho;
    for (Eigen::Index i = 0; i < q; ++i) v[i] = std::max(v[i] - theta, 0.0);
}

struct FaceSolution {
    Eigen::VectorXd v;       // coefficients on the face, sum 1
    double multiplier = 0.0; // shared value of (G v - c) over the face
    bool regularized = false;
};

/// Minimize yy - 2 v.c + v.G v over {v : sum v = 1} restricted to the
/// coordinates in `face`.  The equality constraint is eliminated by the
/// null-space parametrization v = uniform + A u with A = [I; -1'], which
/// cancels any constant (translation) component of the Gram block and keeps
/// the reduced Hessian well scaled.  Singular reduced systems are retried
/// with a ridge of ridge_factor * trace(G_face); the ridge shrinks u toward
/// zero, i.e. v toward the uniform (minimum-norm) point of the face.
inline FaceSolution solve_face(const Eigen::MatrixXd& G, const Eigen::VectorXd& c,
                               const std::vector<Eigen::Index>& face, double ridge_factor) {
    FaceSolution out;
    const Eigen::Index q = static_cast<Eigen::Index>(face.size());
    if (q == 1) {
        out.v = Eigen::VectorXd::Ones(1);
        out.multiplier = G(face[0], face[0]) - c(face[0]);
        return out;
    }
    Eigen::MatrixXd Gf(q, q);
    Eigen::VectorXd cf(q);
    for (Eigen::Index a = 0; a < q; ++a) {
        cf(a) = c(face[a]);
        for (Eigen::Index b = 0; b < q; ++b) Gf(a, b) = G(face[a], face[b]);
    }
    const double trace = Gf.trace();
    const Eigen::VectorXd v0 = Eigen::VectorXd::Constant(q, 1.0 / static_cast<double>(q));
    if (trace == 0.0) {
        // All-zero regressors on this face: every simplex point is optimal;
        // report the minimum-norm one.
        out.v = v0;
        out.multiplier = -cf.mean();
        out.regularized = true;
        return out;
    }

    // Reduced Hessian H(i,j) = (e_i - e_q)' Gf (e_j - e_q) and gradient at
    // the uniform anchor.
    const Eigen::Index m = q - 1;
    Eigen::MatrixXd H(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j)
            H(i, j) = Gf(i, j) - Gf(i, q - 1) - Gf(q - 1, j) + Gf(q - 1, q - 1);
    const Eigen::VectorXd r0 = cf - Gf * v0; // -(gradient)/2 at the anchor
    Eigen::VectorXd b(m);
    for (Eigen::Index i = 0; i < m; ++i) b(i) = r0(i) - r0(q - 1);

    const double h_scale = 1.0 + H.cwiseAbs().maxCoeff() + b.cwiseAbs().maxCoeff();
    auto try_solve = [&](double ridge, Eigen::VectorXd& u) {
        Eigen::MatrixXd Hr = H;
        if (ridge > 0.0) Hr.diagonal().array() += ridge;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(Hr);
        if (ldlt.info() != Eigen::Success) return false;
        if (ridge == 0.0) {
            // LDLT pseudo-solves consistent singular systems silently; route
            // rank-deficient faces through the ridge so they get flagged.
            const Eigen::VectorXd D = ldlt.vectorD();
            if (D.minCoeff() <= 1e-12 * std::max(D.maxCoeff(), 0.0)) return false;
        }
        u = ldlt.solve(b);
        u += ldlt.solve(b - Hr * u); // one refinement step
        if (!u.allFinite()) return false;
        const double resid = (Hr * u - b).cwiseAbs().maxCoeff();
        return resid <= 1e-9 * (h_scale + Hr.cwiseAbs().maxCoeff() * u.cwiseAbs().maxCoeff());
    };

    Eigen::VectorXd u(m);
    if (!try_solve(0.0, u)) {
        if (!try_solve(ridge_factor * trace, u))
            throw solver_error("face system unsolvable even with ridge regularization");
        out.regularized = true;
    }
    out.v = v0;
    for (Eigen::Index i = 0; i < m; ++i) {
        out.v(i) += u(i);
        out.v(q - 1) -= u(i);
    }
    out.multiplier = (Gf * out.v - cf).mean();
    return out;
}

} // namespace detail

/// Minimize  |y - A w|^2 = yy - 2 w.c + w.G w  over the probability simplex,
/// where G = A'A and c = A'y.  Primal active-set over simplex faces: solve
/// the equality-constrained system on the current face, take a blocking step
/// when coordinates go negative, and re-admit zero coordinates whose KKT
/// multiplier is violated.  Falls back to projected gradient if the active
/// set churns past its iteration cap.  Deterministic for identical inputs.
inline SimplexQpResult solve_simplex_qp(const Eigen::MatrixXd& G, const Eigen::VectorXd& c,
                                        double yy, const SimplexQpOptions& opt = {},
                                        std::span<const double> warm_start = {}) {
    const Eigen::Index q = G.rows();
    if (q == 0) throw usage_error("empty support");
    const double scale = 1.0 + yy;
    const double kkt_tol = opt.kkt_rel_tol * scale;
    const int max_iters = opt.max_active_set_iters > 0
                              ? opt.max_active_set_iters
                              : 10 * static_cast<int>(q) * static_cast<int>(q) + 20;

    SimplexQpResult res;
    auto quad_objective = [&](const Eigen::VectorXd& w) {
        const double val = yy - 2.0 * w.dot(c) + w.dot(G * w);
        return std::max(val, 0.0);
    };

    auto finish = [&](Eigen::VectorXd w) {
        // Output hygiene: zero out roundoff-sized weights and renormalize, so
        // vertex optima come back as exact vertices.
        for (Eigen::Index i = 0; i < q; ++i)
            if (std::abs(w(i)) < 1e-12) w(i) = 0.0;
        const double s = w.sum();
        if (s > 0.0) w /= s;
        else w.setConstant(1.0 / static_cast<double>(q));

        Eigen::VectorXd g = G * w - c;
        double lambda = 0.0;
        Eigen::Index positive = 0;
        for (Eigen::Index i = 0; i < q; ++i) {
            if (w(i) > 0.0) {
                lambda += g(i);
                ++positive;
            }
        }
        lambda /= static_cast<double>(positive);
        double raw = 0.0;
        for (Eigen::Index i = 0; i < q; ++i) {
            if (w(i) > 0.0) raw = std::max(raw, std::abs(g(i) - lambda));
            else raw = std::max(raw, std::max(0.0, lambda - g(i)));
        }
        res.kkt_residual = raw / scale;
        res.objective = quad_objective(w);
        res.weights.assign(w.data(), w.data() + q);
        return res;
    };

    Eigen::VectorXd w;
    if (!warm_start.empty()) {
        if (static_cast<Eigen::Index>(warm_start.size()) != q)
            throw usage_error("warm start size does not match support size");
        w = Eigen::Map<const Eigen::VectorXd>(warm_start.data(), q).cwiseMax(0.0);
        const double s = w.sum();
        if (s > 0.0) w /= s;
        else w.setConstant(1.0 / static_cast<double>(q));
    } else {
        w = Eigen::VectorXd::Constant(q, 1.0 / static_cast<double>(q));
    }

    // Fully degenerate data (constant series, all-zero series): the uniform
    // point already attains zero residual, which is the canonical answer.
    {
        const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(q, 1.0 / static_cast<double>(q));
        if (quad_objective(uniform) <= 1e-18 * scale) return finish(uniform);
    }

    std::vector<Eigen::Index> face;
    auto rebuild_face = [&] {
        face.clear();
        for (Eigen::Index i = 0; i < q; ++i)
            if (w(i) > 0.0) face.push_back(i);
    };
    rebuild_face();

    bool converged = false;
    Eigen::Index blocked_entry = -1; // degenerate-entry guard
    for (int iter = 0; iter < max_iters; ++iter) {
        res.iterations = iter + 1;
        detail::FaceSolution fs = detail::solve_face(G, c, face, opt.ridge_factor);
        res.regularized = res.regularized || fs.regularized;

        double min_v = std::numeric_limits<double>::infinity();
        for (Eigen::Index a = 0; a < fs.v.size(); ++a) min_v = std::min(min_v, fs.v(a));

        if (min_v >= -1e-14) {
            // Face optimum is feasible; adopt it and test the off-face KKT
            // conditions g_i >= lambda.
            w.setZero();
            for (std::size_t a = 0; a < face.size(); ++a) w(face[a]) = std::max(fs.v(a), 0.0);
            Eigen::VectorXd g = G * w - c;
            Eigen::Index entering = -1;
            double worst = -kkt_tol;
            for (Eigen::Index i = 0; i < q; ++i) {
                if (w(i) > 0.0) continue;
                if (i == blocked_entry) continue;
                const double violation = g(i) - fs.multiplier;
                if (violation < worst) {
                    worst = violation;
                    entering = i;
                }
            }
            if (entering < 0) {
                converged = true;
                break;
            }
            face.push_back(entering);
            std::sort(face.begin(), face.end());
            blocked_entry = -1;
        } else {
            // Blocking step from w toward the face optimum.
            double alpha = 1.0;
            for (std::size_t a = 0; a < face.size(); ++a) {
                if (fs.v(a) < 0.0) {
                    const double wi = w(face[a]);
                    alpha = std::min(alpha, wi / (wi - fs.v(a)));
                }
            }
            if (alpha <= 0.0) {
                // The coordinate just admitted came back negative at zero
                // weight; drop it and bar it from immediate re-entry.
                Eigen::Index worst_idx = -1;
                double worst_v = 0.0;
                for (std::size_t a = 0; a < face.size(); ++a) {
                    if (w(face[a]) == 0.0 && fs.v(a) < worst_v) {
                        worst_v = fs.v(a);
                        worst_idx = face[a];
                    }
                }
                if (worst_idx < 0) break; // inconsistent state; let fallback finish
                face.erase(std::remove(face.begin(), face.end(), worst_idx), face.end());
                blocked_entry = worst_idx;
                continue;
            }
            std::vector<Eigen::Index> keep;
            for (std::size_t a = 0; a < face.size(); ++a) {
                const Eigen::Index i = face[a];
                const double stepped = (1.0 - alpha) * w(i) + alpha * fs.v(a);
                const double ratio = fs.v(a) < 0.0 ? w(i) / (w(i) - fs.v(a)) : 2.0;
                if (fs.v(a) < 0.0 && ratio <= alpha * (1.0 + 1e-12)) {
                    w(i) = 0.0;
                } else {
                    w(i) = std::max(stepped, 0.0);
                    keep.push_back(i);
                }
            }
            face = std::move(keep);
            blocked_entry = -1;
            if (face.empty()) { // numerically possible only under heavy roundoff
                w.setConstant(1.0 / static_cast<double>(q));
                rebuild_face();
            }
            const double s = w.sum();
            if (s > 0.0) w /= s;
        }
    }

    auto kkt_violation = [&](const Eigen::VectorXd& point) {
        Eigen::VectorXd g = G * point - c;
        double lambda = 0.0;
        Eigen::Index positive = 0;
        for (Eigen::Index i = 0; i < q; ++i) {
            if (point(i) > 0.0) {
                lambda += g(i);
                ++positive;
            }
        }
        if (positive == 0) return std::numeric_limits<double>::infinity();
        lambda /= static_cast<double>(positive);
        double raw = 0.0;
        for (Eigen::Index i = 0; i < q; ++i) {
            if (point(i) > 0.0) raw = std::max(raw, std::abs(g(i) - lambda));
            else raw = std::max(raw, std::max(0.0, lambda - g(i)));
        }
        return raw;
    };

    (void)converged; // the residual check below is authoritative either way
    if (kkt_violation(w) > kkt_tol) {
        // Projected-gradient fallback with a Gershgorin step bound.
        res.fallback = true;
        double L = 0.0;
        for (Eigen::Index i = 0; i < q; ++i) L = std::max(L, G.row(i).cwiseAbs().sum());
        const double step = 1.0 / std::max(2.0 * L, 1e-300);
        for (int it = 0; it < opt.max_pg_iters; ++it) {
            Eigen::VectorXd g = 2.0 * (G * w - c);
            Eigen::VectorXd next = w - step * g;
            detail::project_simplex(next);
            w = next;
            if ((it & 63) == 0 && kkt_violation(w) <= kkt_tol) break;
        }
    }

    return finish(w);
}

} // namespace spar
