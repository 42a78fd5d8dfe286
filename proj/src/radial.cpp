#include "snlab/radial.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include <fftw3.h>

namespace snlab {

namespace {

// FFTW planning is not thread-safe; execution on distinct plans is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

// Solve the 5x5 Vandermonde system for the quartic through (x_k, y_k).
std::array<double, 5> quartic_through(const std::array<double, 5>& x, const std::array<double, 5>& y) {
    double a[5][6];
    for (int i = 0; i < 5; ++i) {
        double p = 1.0;
        for (int j = 0; j < 5; ++j) {
            a[i][j] = p;
            p *= x[i];
        }
        a[i][5] = y[i];
    }
    for (int col = 0; col < 5; ++col) {
        int piv = col;
        for (int r = col + 1; r < 5; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        for (int k = 0; k < 6; ++k) std::swap(a[col][k], a[piv][k]);
        for (int r = 0; r < 5; ++r) {
            if (r == col) continue;
            const double f = a[r][col] / a[col][col];
            for (int k = col; k < 6; ++k) a[r][k] -= f * a[col][k];
        }
    }
    std::array<double, 5> c{};
    for (int i = 0; i < 5; ++i) c[i] = a[i][5] / a[i][i];
    return c;
}

}  // namespace

RadialGrid RadialGrid::with_extent(double r_max, std::size_t n_points) {
    if (n_points < 4) throw std::invalid_argument("RadialGrid: need at least 4 points");
    if (!(r_max > 0.0)) throw std::invalid_argument("RadialGrid: extent must be positive");
    return {n_points, r_max / static_cast<double>(n_points - 1)};
}

std::size_t RadialGrid::nearest_index(double radius) const {
    const double idx = std::round(radius / spacing);
    return static_cast<std::size_t>(std::clamp(idx, 0.0, static_cast<double>(n_points - 1)));
}

std::vector<double> RadialGrid::radii() const {
    std::vector<double> out(n_points);
    for (std::size_t i = 0; i < n_points; ++i) out[i] = r(i);
    return out;
}

RadialState RadialState::from_function(const RadialGrid& grid,
                                       const std::function<cdouble(double)>& psi_of_r, double t) {
    RadialState s{grid, std::vector<cdouble>(grid.n_points), t};
    for (std::size_t i = 1; i + 1 < grid.n_points; ++i) s.u[i] = grid.r(i) * psi_of_r(grid.r(i));
    return s;
}

RadialState RadialState::gaussian(const RadialGrid& grid, const GaussianPacket& packet) {
    return from_function(grid, [&](double r) { return psi(packet, r); }, packet.time);
}

double RadialState::norm() const {
    double s = 0.0;
    for (const auto& v : u) s += std::norm(v);
    return 4.0 * std::numbers::pi * grid.spacing * s;
}

void RadialState::normalize() {
    const double n = norm();
    if (!(n > 0.0)) throw std::runtime_error("RadialState::normalize: zero state");
    const double f = 1.0 / std::sqrt(n);
    for (auto& v : u) v *= f;
}

cdouble RadialState::psi_at(std::size_t i) const {
    if (i == 0) return u[1] / grid.r(1);
    return u[i] / grid.r(i);
}

std::vector<double> RadialState::density() const {
    std::vector<double> out(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = std::norm(psi_at(i));
    return out;
}

double RadialState::peak_radius() const {
    std::size_t best = 1;
    for (std::size_t i = 1; i + 1 < u.size(); ++i)
        if (std::norm(u[i]) > std::norm(u[best])) best = i;
    if (best < 2 || best + 2 >= u.size()) return grid.r(best);
    std::array<double, 5> x{}, y{};
    for (int k = 0; k < 5; ++k) {
        x[k] = static_cast<double>(k - 2);
        y[k] = std::norm(u[best + k - 2]);
    }
    const auto c = quartic_through(x, y);
    // Newton on the derivative, starting from the grid maximum.
    double s = 0.0;
    for (int it = 0; it < 30; ++it) {
        const double d1 = c[1] + 2 * c[2] * s + 3 * c[3] * s * s + 4 * c[4] * s * s * s;
        const double d2 = 2 * c[2] + 6 * c[3] * s + 12 * c[4] * s * s;
        if (d2 >= 0.0) break;
        const double step = d1 / d2;
        s -= step;
        if (std::abs(step) < 1e-14) break;
    }
    s = std::clamp(s, -1.0, 1.0);
    return grid.r(best) + s * grid.spacing;
}

double RadialState::rms_radius() const {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double w = std::norm(u[i]);
        num += w * grid.r(i) * grid.r(i);
        den += w;
    }
    return std::sqrt(num / den);
}

KineticPropagator::KineticPropagator(const RadialGrid& grid, double mass, double hbar)
    : grid_(grid), mass_(mass), hbar_(hbar), n_(grid.interior()) {
    if (grid.n_points < 4) throw std::invalid_argument("KineticPropagator: grid too small");
    wavenumber_sq_.resize(n_);
    const double L = grid.extent();
    for (std::size_t k = 0; k < n_; ++k) {
        const double kk = std::numbers::pi * static_cast<double>(k + 1) / L;
        wavenumber_sq_[k] = kk * kk;
    }
    buffer_ = fftw_alloc_real(2 * n_);
    std::lock_guard lock(planner_mutex());
    const int n = static_cast<int>(n_);
    const fftw_r2r_kind kind = FFTW_RODFT00;
    plan_ = fftw_plan_many_r2r(1, &n, 2, buffer_, nullptr, 1, n, buffer_, nullptr, 1, n, &kind,
                               FFTW_ESTIMATE);
    if (!plan_) throw std::runtime_error("KineticPropagator: FFTW planning failed");
}

KineticPropagator::~KineticPropagator() {
    std::lock_guard lock(planner_mutex());
    if (plan_) fftw_destroy_plan(static_cast<fftw_plan>(plan_));
    if (buffer_) fftw_free(buffer_);
}

void KineticPropagator::forward(std::span<const cdouble> u) {
    for (std::size_t j = 0; j < n_; ++j) {
        buffer_[j] = u[j + 1].real();
        buffer_[n_ + j] = u[j + 1].imag();
    }
    fftw_execute(static_cast<fftw_plan>(plan_));
}

void KineticPropagator::backward(std::span<cdouble> u) {
    fftw_execute(static_cast<fftw_plan>(plan_));
    const double scale = 1.0 / (2.0 * static_cast<double>(n_ + 1));
    for (std::size_t j = 0; j < n_; ++j) u[j + 1] = {buffer_[j] * scale, buffer_[n_ + j] * scale};
    u[0] = 0.0;
    u[u.size() - 1] = 0.0;
}

void KineticPropagator::apply(std::span<cdouble> u, double dt) {
    if (u.size() != grid_.n_points) throw std::invalid_argument("KineticPropagator: size mismatch");
    forward(u);
    const double f = hbar_ * dt / (2.0 * mass_);
    for (std::size_t k = 0; k < n_; ++k) {
        const double phase = -f * wavenumber_sq_[k];
        const double c = std::cos(phase), s = std::sin(phase);
        const double re = buffer_[k], im = buffer_[n_ + k];
        buffer_[k] = re * c - im * s;
        buffer_[n_ + k] = re * s + im * c;
    }
    backward(u);
}

double KineticPropagator::kinetic_energy(std::span<const cdouble> u) {
    forward(u);
    // u_j = (1/(n+1)) sum_k b_k sin(...) with b the RODFT00 output, so
    // sum_j |u_j|^2 = sum_k |b_k|^2 / (2(n+1)).
    double e = 0.0;
    for (std::size_t k = 0; k < n_; ++k)
        e += wavenumber_sq_[k] * (buffer_[k] * buffer_[k] + buffer_[n_ + k] * buffer_[n_ + k]);
    const double np1 = static_cast<double>(n_ + 1);
    e *= grid_.spacing / (2.0 * np1);
    return 4.0 * std::numbers::pi * hbar_ * hbar_ / (2.0 * mass_) * e;
}

std::vector<double> KineticPropagator::dense_operator() const {
    std::vector<double> t(n_ * n_, 0.0);
    const double np1 = static_cast<double>(n_ + 1);
    const double pref = hbar_ * hbar_ / (2.0 * mass_) * 2.0 / np1;
    for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t j = 0; j < n_; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n_; ++k)
                s += wavenumber_sq_[k] *
                     std::sin(std::numbers::pi * double((i + 1) * (k + 1)) / np1) *
                     std::sin(std::numbers::pi * double((j + 1) * (k + 1)) / np1);
            t[i * n_ + j] = pref * s;
        }
    return t;
}

void KineticPropagator::evaluate(std::span<const cdouble> u, std::span<const double> radii,
                                 std::span<cdouble> out) {
    if (u.size() != grid_.n_points || out.size() != radii.size())
        throw std::invalid_argument("KineticPropagator::evaluate: size mismatch");
    forward(u);
    const double scale = 1.0 / static_cast<double>(n_ + 1);
    for (std::size_t p = 0; p < radii.size(); ++p) {
        const double r = radii[p];
        if (r < 0.0 || r > grid_.extent()) throw std::out_of_range("KineticPropagator::evaluate: radius off grid");
        double re = 0.0, im = 0.0;
        for (std::size_t k = 0; k < n_; ++k) {
            const double s = std::sin(std::sqrt(wavenumber_sq_[k]) * r);
            re += buffer_[k] * s;
            im += buffer_[n_ + k] * s;
        }
        out[p] = {re * scale, im * scale};
    }
}

double KineticPropagator::max_energy() const {
    return hbar_ * hbar_ * wavenumber_sq_.back() / (2.0 * mass_);
}

}  // namespace snlab
