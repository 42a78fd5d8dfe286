#include "snlab/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "snlab/potential.hpp"

namespace snlab {

namespace {

// Streaming mean and second moment, mergeable in a fixed order.
struct Welford {
    double n = 0.0, mean = 0.0, m2 = 0.0;

    void add(double x) {
        n += 1.0;
        const double d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    void merge(const Welford& o) {
        if (o.n == 0.0) return;
        const double tot = n + o.n;
        const double d = o.mean - mean;
        mean += d * o.n / tot;
        m2 += o.m2 + d * d * n * o.n / tot;
        n = tot;
    }
    double stderr_of_mean() const { return n > 1.0 ? std::sqrt(m2 / (n - 1.0) / n) : 0.0; }
};

struct EntryStats {
    Welford re, im;
};

// Accumulators of one batch: [record][i * k + j].
struct Batch {
    std::vector<std::vector<EntryStats>> stats;
    std::size_t samples = 0;
    std::size_t failed = 0;
    double max_norm_rate = 0.0;
    double steps = 0.0;
    std::string first_error;
};

double l_of_tau(double tau) { return 1.0 / std::cos(tau); }

}  // namespace

void EnsembleConfig::validate() const {
    if (n_trajectories < 1) throw std::invalid_argument("ensemble: need at least one trajectory");
    if (!(t_final > 0.0)) throw std::invalid_argument("ensemble: t_final must be positive");
    if (n_records < 2) throw std::invalid_argument("ensemble: need at least two records");
    if (pairs.empty()) throw std::invalid_argument("ensemble: no observation pairs");
    for (const auto& pr : pairs)
        if (!(pr[0] > 0.0) || !(pr[1] > 0.0)) throw std::invalid_argument("ensemble: pair radii must be positive");
    if (!(xi_max > 0.0) || n_points < 16) throw std::invalid_argument("ensemble: co-moving grid too small");
    if (!(max_step_phase > 0.0) || !(max_dtau > 0.0)) throw std::invalid_argument("ensemble: step limits must be positive");
    if (n_batches == 0) throw std::invalid_argument("ensemble: n_batches must be positive");
    if (!(noise_scale >= 0.0)) throw std::invalid_argument("ensemble: noise_scale must be non-negative");
    if (temporal.mode == TemporalMode::exponential_memory && !(temporal.correlation_time > 0.0))
        throw std::invalid_argument("ensemble: correlation time must be positive");
}

NoiseModel comoving_noise_model(const EnsembleConfig& cfg) {
    cfg.validate();
    const auto grid = RadialGrid::with_extent(cfg.xi_max, cfg.n_points);
    std::vector<double> xi;
    for (std::size_t i = 1; i + 1 < grid.n_points; ++i) xi.push_back(grid.r(i));
    auto k = unit_width_kernel(xi);
    return NoiseModel::build(std::move(xi), std::move(k), cfg.temporal, 1.0, cfg.seed);
}

EnsembleResult run_ensemble(const SimParams& p, const EnsembleConfig& cfg) {
    const auto model = comoving_noise_model(cfg);
    return run_ensemble(p, cfg, model);
}

EnsembleResult run_ensemble(const SimParams& p, const EnsembleConfig& cfg, const NoiseModel& model) {
    p.validate();
    cfg.validate();
    const auto grid = RadialGrid::with_extent(cfg.xi_max, cfg.n_points);
    if (model.size() != grid.interior()) throw std::invalid_argument("run_ensemble: noise model does not match the grid");

    const double a = p.width;
    const double tu = p.mass * a * a / p.hbar;
    const double g = p.G * p.mass * p.mass * p.mass * a / (p.hbar * p.hbar);

    EnsembleResult res;
    for (const auto& pr : cfg.pairs)
        for (double r : pr)
            if (std::find(res.radii.begin(), res.radii.end(), r) == res.radii.end()) res.radii.push_back(r);
    const std::size_t k = res.radii.size();
    const std::size_t nrec = cfg.n_records;
    for (std::size_t j = 0; j < nrec; ++j) res.t.push_back(cfg.t_final * double(j) / double(nrec - 1));

    // Resolution mask from the free-packet envelope xi exp(-xi^2/2).
    const double env_peak = std::exp(-0.5);
    std::vector<std::vector<char>> resolved(nrec, std::vector<char>(k, 0));
    std::vector<std::vector<double>> xi_obs(nrec, std::vector<double>(k));
    for (std::size_t j = 0; j < nrec; ++j) {
        const double L = std::sqrt(1.0 + std::pow(res.t[j] / tu, 2));
        for (std::size_t q = 0; q < k; ++q) {
            const double xi = res.radii[q] / (a * L);
            xi_obs[j][q] = xi;
            const double env = xi * std::exp(-0.5 * xi * xi) / env_peak;
            resolved[j][q] = (xi <= 0.95 * cfg.xi_max && env >= cfg.resolve_floor) ? 1 : 0;
        }
    }

    // Fixed potential profiles on the co-moving grid.
    const std::size_t n = grid.n_points;
    std::vector<double> harmonic(n), mean(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = grid.r(i);
        harmonic[i] = 0.5 * xi * xi;
        mean[i] = i == 0 ? 0.0 : -g * cfg.mean_scale * std::erf(xi) / xi;
    }
    const double mean_bound = g * cfg.mean_scale * 2.0 / std::sqrt(std::numbers::pi);
    const double noise_coef = 0.5 * g * cfg.noise_scale;

    std::vector<cdouble> v0(n);
    for (std::size_t i = 1; i + 1 < n; ++i) v0[i] = grid.r(i) * std::exp(-0.5 * grid.r(i) * grid.r(i));
    {
        RadialState s{grid, v0, 0.0};
        s.normalize();
        v0 = s.u;
    }

    const std::size_t nb = std::min(cfg.n_batches, cfg.n_trajectories);
    std::vector<Batch> batches(nb);
    std::vector<double> rec_tau(nrec);
    for (std::size_t j = 0; j < nrec; ++j) rec_tau[j] = std::atan(res.t[j] / tu);
    const bool white = cfg.temporal.mode == TemporalMode::white;
    const bool frozen = !white && !std::isfinite(cfg.temporal.correlation_time);

#pragma omp parallel for schedule(dynamic, 1)
    for (long long bi = 0; bi < static_cast<long long>(nb); ++bi) {
        Batch& B = batches[bi];
        B.stats.assign(nrec, std::vector<EntryStats>(k * k));
        KineticPropagator kin(grid, 1.0, 1.0);
        const std::size_t lo = cfg.n_trajectories * bi / nb;
        const std::size_t hi = cfg.n_trajectories * (bi + 1) / nb;
        std::vector<cdouble> vals(k);
        std::vector<std::vector<cdouble>> rows(nrec, std::vector<cdouble>(k));
        std::vector<double> W(n, 0.0), P1(n);
        for (std::size_t traj = lo; traj < hi; ++traj) {
            try {
                RadialState s{grid, v0, 0.0};
                NoiseStream ns(model, traj);
                double tau = 0.0;
                double wmax = 0.0;
                double norm_rate = 0.0;
                std::size_t steps = 0;
                bool first = true;
                auto fill_profile = [&](const std::vector<double>& w) {
                    wmax = 0.0;
                    for (std::size_t i = 0; i + 2 < n; ++i) {
                        W[i + 1] = w[i];
                        wmax = std::max(wmax, std::abs(w[i]));
                    }
                    for (std::size_t i = 0; i < n; ++i) P1[i] = mean[i] + noise_coef * W[i];
                };
                auto kick = [&](double L, double h) {
                    for (std::size_t i = 1; i + 1 < n; ++i) s.u[i] *= std::polar(1.0, -h * (harmonic[i] + L * P1[i]));
                };
                auto record = [&](std::size_t j) {
                    std::vector<double> pts(k);
                    for (std::size_t q = 0; q < k; ++q) pts[q] = resolved[j][q] ? xi_obs[j][q] : 0.0;
                    kin.evaluate(s.u, pts, vals);
                    const double L = std::sqrt(1.0 + std::pow(res.t[j] / tu, 2));
                    const double tt = res.t[j] / tu;
                    for (std::size_t q = 0; q < k; ++q) {
                        if (!resolved[j][q]) {
                            rows[j][q] = 0.0;
                            continue;
                        }
                        const double xi = xi_obs[j][q];
                        const double rr = res.radii[q] / a;
                        // psi = (a L)^{-3/2} (v / xi) exp(i t r^2 / (2 L^2)), with the
                        // co-moving v normalised as a reduced wavefunction.
                        const double chirp = tt * rr * rr / (2.0 * L * L);
                        rows[j][q] = vals[q] / xi * std::pow(a * L, -1.5) * std::polar(1.0, chirp);
                    }
                };
                record(0);
                for (std::size_t j = 1; j < nrec; ++j) {
                    while (tau < rec_tau[j]) {
                        if (first && !white) {
                            // z_0 of the stationary law; the step length is not used
                            fill_profile(ns.next(1.0));
                            first = false;
                        }
                        const double room = rec_tau[j] - tau;
                        const double L_hi = l_of_tau(std::min(tau + std::min(cfg.max_dtau, room), rec_tau[j]));
                        const double bound = L_hi * (mean_bound + noise_coef * (white ? 0.0 : 1.5 * wmax));
                        double dtau = std::min({cfg.max_dtau, room, bound > 0.0 ? cfg.max_step_phase / bound : room});
                        if (room - dtau < 1e-12 * rec_tau[j]) dtau = room;
                        const double L0 = l_of_tau(tau), L1 = l_of_tau(tau + dtau);
                        if (white || (steps > 0 && !frozen)) {
                            // lab-time length of the step, dt = L^2 dtau at the midpoint
                            const double Lm = l_of_tau(tau + 0.5 * dtau);
                            fill_profile(ns.next(Lm * Lm * dtau * tu));
                        }
                        const double nb0 = s.norm();
                        kick(L0, 0.5 * dtau);
                        kin.apply(s.u, dtau);
                        kick(L1, 0.5 * dtau);
                        tau = (dtau == room) ? rec_tau[j] : tau + dtau;
                        ++steps;
                        const double nb1 = s.norm();
                        if (!(std::abs(nb1 - nb0) <= cfg.norm_tolerance))
                            throw NumericalError("norm drift " + std::to_string(std::abs(nb1 - nb0)) + " in one step");
                    }
                    record(j);
                    const double drift = std::abs(s.norm() - 1.0);
                    if (res.t[j] > 0.0) norm_rate = std::max(norm_rate, drift / res.t[j]);
                }
                for (std::size_t j = 0; j < nrec; ++j)
                    for (std::size_t q = 0; q < k; ++q)
                        if (!std::isfinite(rows[j][q].real()) || !std::isfinite(rows[j][q].imag()))
                            throw NumericalError("non-finite amplitude");
                for (std::size_t j = 0; j < nrec; ++j)
                    for (std::size_t q1 = 0; q1 < k; ++q1)
                        for (std::size_t q2 = 0; q2 < k; ++q2) {
                            const cdouble e = rows[j][q1] * std::conj(rows[j][q2]);
                            auto& st = B.stats[j][q1 * k + q2];
                            st.re.add(e.real());
                            st.im.add(e.imag());
                        }
                ++B.samples;
                B.steps += double(steps);
                B.max_norm_rate = std::max(B.max_norm_rate, norm_rate);
            } catch (const std::exception& e) {
                ++B.failed;
                if (B.first_error.empty()) B.first_error = e.what();
            }
        }
    }

    // Merge in batch order.
    std::vector<std::vector<EntryStats>> total(nrec, std::vector<EntryStats>(k * k));
    std::string first_error;
    for (const auto& B : batches) {
        for (std::size_t j = 0; j < nrec; ++j)
            for (std::size_t e = 0; e < k * k; ++e) {
                total[j][e].re.merge(B.stats[j][e].re);
                total[j][e].im.merge(B.stats[j][e].im);
            }
        res.n_samples += B.samples;
        res.n_failed += B.failed;
        res.max_norm_rate = std::max(res.max_norm_rate, B.max_norm_rate);
        res.mean_steps += B.steps;
        if (first_error.empty()) first_error = B.first_error;
    }
    if (double(res.n_failed) > cfg.max_failure_fraction * double(cfg.n_trajectories))
        throw NumericalError("run_ensemble: " + std::to_string(res.n_failed) + " of " +
                             std::to_string(cfg.n_trajectories) + " trajectories failed; first: " + first_error);
    if (res.n_samples == 0) throw NumericalError("run_ensemble: no successful trajectories");
    res.mean_steps /= double(res.n_samples);

    for (std::size_t j = 0; j < nrec; ++j) {
        DensitySnapshot snap;
        snap.t = res.t[j];
        snap.rho.resize(k * k);
        snap.stderr_re.resize(k * k);
        snap.stderr_im.resize(k * k);
        snap.resolved = resolved[j];
        for (std::size_t q1 = 0; q1 < k; ++q1)
            for (std::size_t q2 = 0; q2 < k; ++q2) {
                const auto& a1 = total[j][q1 * k + q2];
                const auto& a2 = total[j][q2 * k + q1];
                // Hermitian by construction: average the two estimates of the same entry.
                const cdouble v{0.5 * (a1.re.mean + a2.re.mean), 0.5 * (a1.im.mean - a2.im.mean)};
                snap.rho[q1 * k + q2] = v;
                snap.stderr_re[q1 * k + q2] = a1.re.stderr_of_mean();
                snap.stderr_im[q1 * k + q2] = a1.im.stderr_of_mean();
            }
        for (std::size_t q = 0; q < k; ++q) snap.rho[q * k + q] = snap.rho[q * k + q].real();
        res.rho.push_back(std::move(snap));
    }

    // Decay curves with jackknife errors over batches.
    auto coherence = [&](cdouble r12, double r11, double r22) {
        return (r11 > 0.0 && r22 > 0.0) ? std::abs(r12) / std::sqrt(r11 * r22) : std::numeric_limits<double>::quiet_NaN();
    };
    for (const auto& pr : cfg.pairs) {
        CoherenceDecay d;
        d.r1 = pr[0];
        d.r2 = pr[1];
        const std::size_t i1 = std::find(res.radii.begin(), res.radii.end(), pr[0]) - res.radii.begin();
        const std::size_t i2 = std::find(res.radii.begin(), res.radii.end(), pr[1]) - res.radii.begin();
        for (std::size_t j = 0; j < nrec; ++j) {
            d.t.push_back(res.t[j]);
            if (!resolved[j][i1] || !resolved[j][i2]) {
                d.D.push_back(std::numeric_limits<double>::quiet_NaN());
                d.D_err.push_back(std::numeric_limits<double>::quiet_NaN());
                continue;
            }
            const auto& rho = res.rho[j].rho;
            const double full = coherence(rho[i1 * k + i2], rho[i1 * k + i1].real(), rho[i2 * k + i2].real());
            d.D.push_back(full);
            // Leave-one-batch-out estimates from sums.
            auto sum_of = [&](const std::vector<EntryStats>& st, std::size_t e) {
                return cdouble{st[e].re.mean * st[e].re.n, st[e].im.mean * st[e].im.n};
            };
            const cdouble S12 = sum_of(total[j], i1 * k + i2);
            const double S11 = sum_of(total[j], i1 * k + i1).real(), S22 = sum_of(total[j], i2 * k + i2).real();
            const double N = total[j][0].re.n;
            std::vector<double> jk;
            for (const auto& B : batches) {
                const double nbk = B.stats[j][0].re.n;
                if (nbk == 0.0 || N - nbk <= 0.0) continue;
                const cdouble s12 = S12 - sum_of(B.stats[j], i1 * k + i2);
                const double s11 = S11 - sum_of(B.stats[j], i1 * k + i1).real();
                const double s22 = S22 - sum_of(B.stats[j], i2 * k + i2).real();
                jk.push_back(coherence(s12, s11, s22));
            }
            double err = 0.0;
            if (jk.size() > 1) {
                double m = 0.0;
                for (double x : jk) m += x;
                m /= double(jk.size());
                double v = 0.0;
                for (double x : jk) v += (x - m) * (x - m);
                err = std::sqrt(double(jk.size() - 1) / double(jk.size()) * v);
            }
            d.D_err.push_back(err);
        }
        res.decays.push_back(std::move(d));
    }
    return res;
}

DecoherenceEstimate extract_decoherence_time(const CoherenceDecay& decay, double criterion_constant) {
    if (!(criterion_constant > 0.0)) throw std::invalid_argument("extract_decoherence_time: criterion constant must be positive");
    DecoherenceEstimate est;
    est.threshold = std::exp(-0.5 * criterion_constant);
    const double log_thr = std::log(est.threshold);

    double prev_t = std::numeric_limits<double>::quiet_NaN(), prev_l = 0.0;
    double last_resolved = 0.0;
    for (std::size_t i = 0; i < decay.t.size(); ++i) {
        const double D = decay.D[i];
        if (!std::isfinite(D)) continue;
        last_resolved = decay.t[i];
        const double l = D > 0.0 ? std::log(D) : -std::numeric_limits<double>::infinity();
        if (l <= log_thr) {
            if (std::isfinite(prev_t) && std::isfinite(l) && l != prev_l) {
                est.crossing_time = prev_t + (log_thr - prev_l) * (decay.t[i] - prev_t) / (l - prev_l);
            } else {
                est.crossing_time = decay.t[i];
                est.initially_below = !std::isfinite(prev_t);
            }
            est.crossed = true;
            break;
        }
        prev_t = decay.t[i];
        prev_l = l;
    }
    if (!est.crossed) est.crossing_time = last_resolved;

    // log D = -kappa t^2 / 2, least squares through the origin.
    double num = 0.0, den = 0.0;
    std::vector<std::pair<double, double>> used;
    for (std::size_t i = 0; i < decay.t.size(); ++i) {
        const double D = decay.D[i], t = decay.t[i];
        if (!std::isfinite(D) || !(D > 0.0) || t <= 0.0) continue;
        // Points deep in the noise floor carry no information about the rate.
        const double err = i < decay.D_err.size() && std::isfinite(decay.D_err[i]) ? decay.D_err[i] : 0.0;
        if (D < 3.0 * err) continue;
        const double l = std::log(std::min(D, 1.0));
        num += t * t * l;
        den += t * t * t * t;
        used.push_back({t, l});
    }
    est.points_used = used.size();
    if (den > 0.0) {
        est.fit_rate = -2.0 * num / den;
        est.fit_time = est.fit_rate > 0.0 ? std::sqrt(criterion_constant / est.fit_rate)
                                          : std::numeric_limits<double>::infinity();
        double rss = 0.0;
        for (auto [t, l] : used) rss += std::pow(l + 0.5 * est.fit_rate * t * t, 2);
        est.fit_residual = std::sqrt(rss / double(used.size()));
    }
    return est;
}

std::vector<double> ansatz_phase_variance(const SimParams& p, double r1, double r2, const std::vector<double>& times,
                                          const TemporalModel& temporal, double noise_scale, std::size_t n_nodes) {
    p.validate();
    if (!(r1 > 0.0) || !(r2 > 0.0)) throw std::invalid_argument("ansatz_phase_variance: radii must be positive");
    if (n_nodes < 8) throw std::invalid_argument("ansatz_phase_variance: need at least 8 nodes");
    std::vector<double> out(times.size(), 0.0);
    double t_max = 0.0;
    for (double t : times) {
        if (!(t >= 0.0)) throw std::invalid_argument("ansatz_phase_variance: negative time");
        t_max = std::max(t_max, t);
    }
    if (t_max == 0.0) return out;

    const double a = p.width;
    const double tu = p.mass * a * a / p.hbar;
    const double c = noise_scale * noise_scale * std::pow(p.G * p.mass * p.mass, 2) / (4.0 * a * a * p.hbar * p.hbar);
    // t = tu sinh(s): dt / L = tu ds, and xi = r / (a cosh s).
    const double s_max = std::asinh(t_max / tu);
    const std::size_t m = n_nodes;
    const double hs = s_max / double(m - 1);
    std::vector<double> s(m), pts(2 * m);
    for (std::size_t i = 0; i < m; ++i) {
        s[i] = hs * double(i);
        pts[i] = r1 / (a * std::cosh(s[i]));
        pts[m + i] = r2 / (a * std::cosh(s[i]));
    }
    const auto K = unit_width_kernel(pts);
    auto dk = [&](std::size_t i, std::size_t j) {
        const std::size_t N = 2 * m;
        return K[i * N + j] + K[(m + i) * N + (m + j)] - K[i * N + (m + j)] - K[(m + i) * N + j];
    };

    // cumulative variance at each node s_k
    std::vector<double> var(m, 0.0);
    const bool white = temporal.mode == TemporalMode::white;
    if (white) {
        // Var = c tu int ds (1/L) dK(s, s)
        for (std::size_t k = 1; k < m; ++k) {
            const double f0 = dk(k - 1, k - 1) / std::cosh(s[k - 1]);
            const double f1 = dk(k, k) / std::cosh(s[k]);
            var[k] = var[k - 1] + c * tu * 0.5 * hs * (f0 + f1);
        }
    } else {
        const double tc = temporal.correlation_time;
        auto corr = [&](std::size_t i, std::size_t j) {
            if (!std::isfinite(tc)) return 1.0;
            return std::exp(-std::abs(tu * (std::sinh(s[i]) - std::sinh(s[j]))) / tc);
        };
        // Var(S) = c tu^2 int_0^S int_0^S ds ds' rho dK; grow the square one node at a time.
        double acc = 0.0;
        std::vector<double> w(m);
        for (std::size_t k = 1; k < m; ++k) {
            // trapezoid weights on [0, s_k]
            for (std::size_t i = 0; i <= k; ++i) w[i] = (i == 0 || i == k) ? 0.5 * hs : hs;
            acc = 0.0;
            for (std::size_t i = 0; i <= k; ++i)
                for (std::size_t j = 0; j <= k; ++j) acc += w[i] * w[j] * corr(i, j) * dk(i, j);
            var[k] = c * tu * tu * acc;
        }
    }
    for (std::size_t q = 0; q < times.size(); ++q) {
        const double sq = std::asinh(times[q] / tu);
        const double x = sq / hs;
        const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(x), m - 2);
        const double f = x - double(i);
        out[q] = var[i] + f * (var[i + 1] - var[i]);
    }
    return out;
}

void write_decay_csv(const std::string& path, const CoherenceDecay& d, const std::string& header) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_decay_csv: cannot open " + path);
    if (!header.empty()) out << "# " << header << '\n';
    out << "t,D,stderr\n";
    char buf[128];
    for (std::size_t i = 0; i < d.t.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", d.t[i], d.D[i], d.D_err[i]);
        out << buf;
    }
}

}  // namespace snlab
