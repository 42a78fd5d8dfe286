#include "snlab/mastereq.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <unsupported/Eigen/MatrixFunctions>

namespace snlab {

namespace {

constexpr double pi = std::numbers::pi;

double j0(double x) {
    if (std::abs(x) < 1e-4) return 1.0 - x * x / 6.0;
    return std::sin(x) / x;
}

// exp(-(k^2 + k'^2) / 4b) [sinh(z)/z - 1], z = k k' / 2b, without overflow or
// cancellation.
double damped_sinhc_minus_one(double k, double kp, double b) {
    const double z = k * kp / (2.0 * b);
    if (z < 1e-2) {
        const double z2 = z * z;
        return std::exp(-(k * k + kp * kp) / (4.0 * b)) * z2 / 6.0 * (1.0 + z2 / 20.0 * (1.0 + z2 / 42.0));
    }
    return std::exp(-(k - kp) * (k - kp) / (4.0 * b)) * (-std::expm1(-2.0 * z)) / (2.0 * z) -
           std::exp(-(k * k + kp * kp) / (4.0 * b));
}

}  // namespace

KGrid KGrid::log_spaced(double k_min, double k_max, std::size_t M) {
    if (M < 4) throw std::invalid_argument("KGrid: need M >= 4");
    if (!(k_min > 0.0) || !(k_max > k_min)) throw std::invalid_argument("KGrid: need 0 < k_min < k_max");
    KGrid g;
    g.k.resize(M);
    g.weight.assign(M, 0.0);
    const double ratio = std::log(k_max / k_min);
    for (std::size_t n = 0; n < M; ++n) g.k[n] = k_min * std::exp(ratio * double(n) / double(M - 1));
    for (std::size_t n = 0; n + 1 < M; ++n) {
        const double dk = g.k[n + 1] - g.k[n];
        g.weight[n] += dk / 2.0;
        g.weight[n + 1] += dk / 2.0;
    }
    return g;
}

KGrid KGrid::for_grid(const RadialGrid& grid, std::size_t M) {
    return log_spaced(pi / grid.extent(), pi / grid.spacing, M);
}

std::vector<double> KGrid::coupling(double mass, const std::vector<double>& radii) const {
    std::vector<double> a(k.size() * radii.size());
    for (std::size_t n = 0; n < k.size(); ++n)
        for (std::size_t i = 0; i < radii.size(); ++i) a[n * radii.size() + i] = mass / k[n] * j0(k[n] * radii[i]);
    return a;
}

double radial_noise_transform(const SimParams& p, const GaussianPacket& packet, double k, double kp) {
    const double b = packet.density_exponent();
    const double pref = p.G * p.G * std::pow(p.mass, 4) / 4.0;
    return pref / (k * k * kp * kp) * damped_sinhc_minus_one(k, kp, b);
}

double DKernel::tilde(std::size_t n, std::size_t np, double t, double tp) const {
    const double s = spatial[n * kgrid.size() + np];
    if (temporal.mode == TemporalMode::white) return t == tp ? s : 0.0;
    if (std::isinf(temporal.correlation_time)) return s;
    return s * std::exp(-std::abs(t - tp) / temporal.correlation_time);
}

double DKernel::plain(std::size_t n, std::size_t np, double t, double tp) const {
    const double k = kgrid.k[n], kp = kgrid.k[np];
    return tilde(n, np, t, tp) / (16.0 * pi * pi * k * k * kp * kp);
}

DKernel build_dkernel(const SimParams& p, const GaussianPacket& packet, const KGrid& kgrid,
                      const TemporalModel& temporal) {
    if (kgrid.size() < 4) throw std::invalid_argument("build_dkernel: k-grid too small");
    if (temporal.mode == TemporalMode::exponential_memory && !(temporal.correlation_time > 0.0))
        throw std::invalid_argument("build_dkernel: correlation_time must be > 0");
    DKernel d;
    d.kgrid = kgrid;
    d.temporal = temporal;
    d.mass = p.mass;
    d.hbar = p.hbar;
    const double sg = p.G / (2.0 * pi * pi * p.hbar);
    d.gamma = sg * sg;
    // C_hat / gamma with G cancelled, so the kernel stays finite at G = 0.
    SimParams unit = p;
    unit.G = 1.0;
    const double inv_gamma_unit = std::pow(2.0 * pi * pi * p.hbar, 2);
    const std::size_t M = kgrid.size();
    d.spatial.assign(M * M, 0.0);
    for (std::size_t n = 0; n < M; ++n)
        for (std::size_t m = n; m < M; ++m) {
            const double k = kgrid.k[n], kp = kgrid.k[m];
            const double c_hat = radial_noise_transform(unit, packet, k, kp);
            if (!std::isfinite(c_hat)) throw NumericalError("build_dkernel: non-finite transform");
            const double v = (2.0 * k * k / pi) * (2.0 * kp * kp / pi) * c_hat * k * kp * inv_gamma_unit /
                             (p.hbar * p.hbar * p.mass * p.mass);
            d.spatial[n * M + m] = v;
            d.spatial[m * M + n] = v;
        }
    return d;
}

std::vector<double> reconstructed_covariance(const DKernel& d, const std::vector<double>& radii) {
    const std::size_t M = d.kgrid.size(), N = radii.size();
    const auto a = d.kgrid.coupling(d.mass, radii);
    std::vector<double> c(N * N, 0.0);
    const double pref = d.gamma * d.hbar * d.hbar;
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = i; j < N; ++j) {
            double s = 0.0;
            for (std::size_t n = 0; n < M; ++n)
                for (std::size_t m = 0; m < M; ++m)
                    s += d.kgrid.weight[n] * d.kgrid.weight[m] * d.spatial[n * M + m] * a[n * N + i] * a[m * N + j];
            c[i * N + j] = pref * s;
            c[j * N + i] = pref * s;
        }
    return c;
}

ToySystem ToySystem::gaussian(const SimParams& p, std::size_t n_points, double extent_widths) {
    if (n_points < 6 || n_points > 66) throw std::invalid_argument("ToySystem: n_points must be in [6, 66]");
    ToySystem s;
    s.grid = RadialGrid::with_extent(extent_widths * p.width, n_points);
    const std::size_t N = s.grid.interior();
    for (std::size_t i = 1; i <= N; ++i) s.radii.push_back(s.grid.r(i));
    KineticPropagator kin(s.grid, p.mass, p.hbar);
    const auto h = kin.dense_operator();
    s.h0 = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(h.data(), N, N);
    const auto packet = GaussianPacket::from_params(p, 0.0);
    s.psi0.resize(N);
    for (std::size_t i = 0; i < N; ++i) s.psi0[i] = s.radii[i] * psi(packet, s.radii[i]);
    s.psi0.normalize();
    return s;
}

void MasterConfig::validate() const {
    if (!(t_final > 0.0) || !(dt > 0.0)) throw std::invalid_argument("MasterConfig: t_final and dt must be > 0");
    if (record_every == 0) throw std::invalid_argument("MasterConfig: record_every must be >= 1");
    if (!(trace_abort > 0.0)) throw std::invalid_argument("MasterConfig: trace_abort must be > 0");
}

namespace {

using Mat = Eigen::MatrixXcd;

struct FreeEvolution {
    Eigen::VectorXd energies;
    Eigen::MatrixXd basis;
    double hbar;

    FreeEvolution(const Eigen::MatrixXd& h0, double hbar_) : hbar(hbar_) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h0);
        energies = es.eigenvalues();
        basis = es.eigenvectors();
    }
    Mat propagator(double t) const {
        Eigen::VectorXcd ph(energies.size());
        for (Eigen::Index i = 0; i < energies.size(); ++i) ph[i] = std::polar(1.0, -energies[i] * t / hbar);
        return basis.cast<cdouble>() * ph.asDiagonal() * basis.transpose().cast<cdouble>();
    }
};

// Everything the right-hand side needs besides rho.
class Generator {
public:
    Generator(const ToySystem& sys, const DKernel& d, bool mean_term, bool memory_term)
        : sys_(sys), d_(d), free_(sys.h0, d.hbar), mean_(mean_term), memory_(memory_term) {
        const std::size_t N = sys.size(), M = d.kgrid.size();
        coupling_ = d.kgrid.coupling(d.mass, sys.radii);
        if (memory_term) {
            // Y_n' = gamma sum_n w_n w_n' D_s(n, n') a_n
            y_.assign(M, Eigen::VectorXd::Zero(N));
            for (std::size_t m = 0; m < M; ++m)
                for (std::size_t n = 0; n < M; ++n) {
                    const double c = d.gamma * d.kgrid.weight[n] * d.kgrid.weight[m] * d.spatial[n * M + m];
                    for (std::size_t i = 0; i < N; ++i) y_[m][i] += c * coupling_[n * N + i];
                }
            if (d.temporal.mode == TemporalMode::white) {
                white_ = Eigen::VectorXd::Zero(N);
                for (std::size_t m = 0; m < M; ++m)
                    for (std::size_t i = 0; i < N; ++i) white_[i] += 0.5 * y_[m][i] * coupling_[m * N + i];
            } else {
                const Eigen::MatrixXd& q = free_.basis;
                for (std::size_t m = 0; m < M; ++m) {
                    Eigen::VectorXd a(N);
                    for (std::size_t i = 0; i < N; ++i) a[i] = coupling_[m * N + i];
                    a_eig_.push_back(q.transpose() * a.asDiagonal() * q);
                }
            }
        }
    }

    Eigen::VectorXd mean_potential(double t) const {
        const std::size_t N = sys_.size(), M = d_.kgrid.size();
        Eigen::VectorXd v = Eigen::VectorXd::Zero(N);
        if (!mean_ || d_.gamma == 0.0) return v;
        const Eigen::VectorXcd psi = free_.propagator(t) * sys_.psi0;
        const double sg = std::sqrt(d_.gamma);
        for (std::size_t n = 0; n < M; ++n) {
            const double k = d_.kgrid.k[n];
            double f = 0.0;
            for (std::size_t i = 0; i < N; ++i) f += std::norm(psi[i]) * j0(k * sys_.radii[i]);
            // -hbar sqrt(gamma) 4 pi k^2 (m/k)^2 F(k) j0(k r), per dk
            const double c = -d_.hbar * sg * 4.0 * pi * d_.mass * d_.mass * d_.kgrid.weight[n] * f;
            for (std::size_t i = 0; i < N; ++i) v[i] += c * j0(k * sys_.radii[i]);
        }
        return v;
    }

    // K(t) such that the memory term is -(K rho + rho K^+).
    Mat memory_operator(double t) const {
        const std::size_t N = sys_.size();
        if (!memory_ || d_.gamma == 0.0) return Mat::Zero(N, N);
        if (d_.temporal.mode == TemporalMode::white) return white_.cast<cdouble>().asDiagonal();
        const double inv_tc = std::isinf(d_.temporal.correlation_time) ? 0.0 : 1.0 / d_.temporal.correlation_time;
        Mat phi(N, N);
        for (std::size_t p = 0; p < N; ++p)
            for (std::size_t q = 0; q < N; ++q) {
                const cdouble mu(inv_tc, (free_.energies[p] - free_.energies[q]) / d_.hbar);
                phi(p, q) = std::abs(mu * t) < 1e-8 ? cdouble(t) - mu * t * t / 2.0 : (1.0 - std::exp(-mu * t)) / mu;
            }
        const Eigen::MatrixXcd q = free_.basis.cast<cdouble>();
        Mat k = Mat::Zero(N, N);
        for (std::size_t m = 0; m < y_.size(); ++m) {
            const Mat mm = q * a_eig_[m].cast<cdouble>().cwiseProduct(phi) * q.transpose();
            k += y_[m].cast<cdouble>().asDiagonal() * mm;
        }
        return k;
    }

    Mat rhs(double t, const Mat& rho) const {
        const cdouble I(0.0, 1.0);
        Mat out = Mat::Zero(rho.rows(), rho.cols());
        if (mean_ && d_.gamma != 0.0) {
            // i sqrt(gamma) int (<A^+> A rho - rho A^+ <A>) = -(i/hbar) [V, rho]
            const Eigen::VectorXcd v = mean_potential(t).cast<cdouble>();
            out += (-I / d_.hbar) * (v.asDiagonal() * rho - rho * v.asDiagonal());
        }
        if (memory_ && d_.gamma != 0.0) {
            const Mat k = memory_operator(t);
            out -= k * rho + rho * k.adjoint();
        }
        return out;
    }

    const FreeEvolution& free() const { return free_; }

private:
    const ToySystem& sys_;
    const DKernel& d_;
    FreeEvolution free_;
    bool mean_, memory_;
    std::vector<double> coupling_;
    std::vector<Eigen::VectorXd> y_;
    Eigen::VectorXd white_;
    std::vector<Eigen::MatrixXd> a_eig_;
};

double min_eigenvalue(const Mat& rho) {
    Eigen::SelfAdjointEigenSolver<Mat> es(rho, Eigen::EigenvaluesOnly);
    return es.eigenvalues()[0];
}

}  // namespace

MasterResult evolve_master(const ToySystem& sys, const DKernel& d, const Mat& rho0, const MasterConfig& cfg) {
    cfg.validate();
    const std::size_t N = sys.size();
    if (rho0.rows() != Eigen::Index(N) || rho0.cols() != Eigen::Index(N))
        throw std::invalid_argument("evolve_master: rho0 size mismatch");
    if ((rho0 - rho0.adjoint()).cwiseAbs().maxCoeff() > 1e-12)
        throw std::invalid_argument("evolve_master: rho0 not Hermitian");
    if (std::abs(rho0.trace() - 1.0) > 1e-10) throw std::invalid_argument("evolve_master: rho0 trace != 1");
    if (min_eigenvalue(rho0) < -1e-12) throw std::invalid_argument("evolve_master: rho0 not positive");

    const Generator gen(sys, d, cfg.mean_term, cfg.memory_term);
    const double h = cfg.dt;
    const std::size_t n_steps = static_cast<std::size_t>(std::llround(cfg.t_final / h));
    const Mat full = gen.free().propagator(h), half = gen.free().propagator(h / 2.0);
    auto prop = [](const Mat& p, const Mat& x) -> Mat { return p * x * p.adjoint(); };

    MasterResult res;
    res.radii = sys.radii;
    Mat rho = rho0;
    double asym = 0.0;
    auto record = [&](double t) {
        MasterSample s;
        s.t = t;
        s.trace_drift = std::abs(rho.trace() - 1.0);
        s.min_eigenvalue = min_eigenvalue(rho);
        s.raw_asymmetry = asym;
        res.max_trace_drift = std::max(res.max_trace_drift, s.trace_drift);
        res.max_raw_asymmetry = std::max(res.max_raw_asymmetry, asym);
        res.min_eigenvalue = std::min(res.min_eigenvalue, s.min_eigenvalue);
        res.samples.push_back(s);
        res.rho.push_back(rho);
        asym = 0.0;
    };
    record(0.0);
    for (std::size_t step = 0; step < n_steps; ++step) {
        const double t = double(step) * h;
        // Integrating-factor RK4: the free commutator is applied exactly.
        const Mat k1 = gen.rhs(t, rho);
        const Mat k2 = gen.rhs(t + h / 2.0, prop(half, rho + (h / 2.0) * k1));
        const Mat k3 = gen.rhs(t + h / 2.0, prop(half, rho) + (h / 2.0) * k2);
        const Mat k4 = gen.rhs(t + h, prop(full, rho) + h * prop(half, k3));
        Mat next = prop(full, rho) + (h / 6.0) * (prop(full, k1) + 2.0 * prop(half, k2 + k3) + k4);
        asym = std::max(asym, (next - next.adjoint()).cwiseAbs().maxCoeff());
        rho = 0.5 * (next + next.adjoint());
        if (!rho.allFinite()) throw NumericalError("evolve_master: non-finite density matrix");
        const double drift = std::abs(rho.trace() - 1.0);
        if (drift > cfg.trace_abort) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "evolve_master: trace drift %.3e at t = %.4g exceeds %.3e", drift,
                          t + h, cfg.trace_abort);
            throw NumericalError(buf);
        }
        if ((step + 1) % cfg.record_every == 0 || step + 1 == n_steps) record(double(step + 1) * h);
    }
    return res;
}

Mat unitary_reference(const ToySystem& sys, const Mat& rho0, double t, double hbar) {
    const Mat u = (Mat(sys.h0.cast<cdouble>()) * cdouble(0.0, -t / hbar)).exp();
    return u * rho0 * u.adjoint();
}

std::vector<double> mean_term_potential(const ToySystem& sys, const DKernel& d, double t) {
    const Generator gen(sys, d, true, false);
    const Eigen::VectorXd v = gen.mean_potential(t);
    return {v.data(), v.data() + v.size()};
}

ToyEnsembleResult toy_ensemble(const ToySystem& sys, const DKernel& d, const MasterConfig& cfg,
                               std::size_t n_trajectories, std::uint64_t seed, bool with_noise,
                               std::size_t n_batches) {
    cfg.validate();
    if (n_trajectories == 0) throw std::invalid_argument("toy_ensemble: need at least one trajectory");
    n_batches = std::max<std::size_t>(1, std::min(n_batches, n_trajectories));
    const std::size_t N = sys.size();
    const double h = cfg.dt;
    const std::size_t n_steps = static_cast<std::size_t>(std::llround(cfg.t_final / h));
    const Generator gen(sys, d, cfg.mean_term, false);
    const Mat prop = gen.free().propagator(h);

    std::vector<Eigen::VectorXd> mean(n_steps + 1);
    for (std::size_t s = 0; s <= n_steps; ++s) mean[s] = gen.mean_potential(double(s) * h);

    const auto cov = reconstructed_covariance(d, sys.radii);
    const NoiseModel model = NoiseModel::build(sys.radii, cov, d.temporal, h, seed);
    const bool noisy = with_noise && cfg.memory_term && d.gamma != 0.0;

    std::vector<std::size_t> rec_steps{0};
    for (std::size_t s = 1; s <= n_steps; ++s)
        if (s % cfg.record_every == 0 || s == n_steps) rec_steps.push_back(s);
    const std::size_t R = rec_steps.size();

    std::vector<std::vector<Mat>> batch_sum(n_batches, std::vector<Mat>(R, Mat::Zero(N, N)));
    std::vector<std::size_t> batch_count(n_batches, 0);

#pragma omp parallel for schedule(dynamic)
    for (std::size_t b = 0; b < n_batches; ++b) {
        const std::size_t lo = b * n_trajectories / n_batches, hi = (b + 1) * n_trajectories / n_batches;
        for (std::size_t traj = lo; traj < hi; ++traj) {
            NoiseStream stream(model, traj);
            Eigen::VectorXcd c = sys.psi0;
            std::size_t r = 0;
            batch_sum[b][r++] += c * c.adjoint();
            for (std::size_t s = 0; s < n_steps; ++s) {
                Eigen::VectorXd noise = Eigen::VectorXd::Zero(N);
                if (noisy) {
                    const auto& v = stream.next(h);
                    for (std::size_t i = 0; i < N; ++i) noise[i] = v[i];
                }
                for (std::size_t i = 0; i < N; ++i) c[i] *= std::polar(1.0, -(mean[s][i] + noise[i]) * h / (2.0 * d.hbar));
                c = prop * c;
                for (std::size_t i = 0; i < N; ++i)
                    c[i] *= std::polar(1.0, -(mean[s + 1][i] + noise[i]) * h / (2.0 * d.hbar));
                if (r < R && rec_steps[r] == s + 1) batch_sum[b][r++] += c * c.adjoint();
            }
            ++batch_count[b];
        }
    }

    ToyEnsembleResult res;
    res.n_trajectories = n_trajectories;
    for (std::size_t r = 0; r < R; ++r) {
        res.t.push_back(double(rec_steps[r]) * h);
        Mat total = Mat::Zero(N, N);
        for (std::size_t b = 0; b < n_batches; ++b) total += batch_sum[b][r];
        const Mat avg = total / double(n_trajectories);
        res.rho.push_back(avg);
        Eigen::MatrixXd var = Eigen::MatrixXd::Zero(N, N);
        if (n_batches > 1) {
            for (std::size_t b = 0; b < n_batches; ++b) {
                const Mat loo = (total - batch_sum[b][r]) / double(n_trajectories - batch_count[b]);
                var += (loo.cwiseAbs() - avg.cwiseAbs()).cwiseAbs2();
            }
            var *= double(n_batches - 1) / double(n_batches);
        }
        res.stderr_abs.push_back(var.cwiseSqrt());
    }
    return res;
}

void write_master_csv(const std::string& path, const MasterResult& r, const std::string& header) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_master_csv: cannot open " + path);
    out << "# " << header << "\n";
    out << "t,trace_drift,min_eigenvalue,raw_asymmetry";
    const std::size_t N = r.radii.size();
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) out << ",re_" << i << "_" << j << ",im_" << i << "_" << j;
    out << "\n";
    char buf[64];
    for (std::size_t s = 0; s < r.samples.size(); ++s) {
        const auto& m = r.samples[s];
        std::snprintf(buf, sizeof buf, "%.17g", m.t);
        out << buf;
        for (double v : {m.trace_drift, m.min_eigenvalue, m.raw_asymmetry}) {
            std::snprintf(buf, sizeof buf, ",%.17g", v);
            out << buf;
        }
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = 0; j < N; ++j) {
                std::snprintf(buf, sizeof buf, ",%.17g,%.17g", r.rho[s](i, j).real(), r.rho[s](i, j).imag());
                out << buf;
            }
        out << "\n";
    }
}

}  // namespace snlab
