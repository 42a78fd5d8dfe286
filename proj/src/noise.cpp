#include "snlab/noise.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <Eigen/Dense>

namespace snlab {

namespace {

constexpr char kMagic[4] = {'S', 'N', 'L', 'B'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("binary file truncated");
    return v;
}

}  // namespace

std::string_view to_string(TemporalMode m) {
    return m == TemporalMode::white ? "white" : "exponential_memory";
}

NoiseModel NoiseModel::build(std::vector<double> radii, std::vector<double> kernel,
                             TemporalModel temporal, double dt, std::uint64_t seed, double psd_band) {
    const std::size_t n = radii.size();
    if (n == 0) throw std::invalid_argument("NoiseModel: empty grid");
    if (kernel.size() != n * n) throw std::invalid_argument("NoiseModel: kernel size mismatch");
    if (!(dt > 0.0)) throw std::invalid_argument("NoiseModel: dt must be positive");
    if (temporal.mode == TemporalMode::exponential_memory && !(temporal.correlation_time > 0.0))
        throw std::invalid_argument("NoiseModel: correlation time must be positive");

    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> C(
        kernel.data(), n, n);
    const double scale = C.cwiseAbs().maxCoeff();
    const double asym = (C - C.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * std::max(scale, 1e-300))
        throw std::invalid_argument("NoiseModel: kernel is not symmetric (max asymmetry " +
                                    std::to_string(asym) + ")");

    Eigen::MatrixXd sym = 0.5 * (C + C.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw std::runtime_error("NoiseModel: eigensolver failed");

    NoiseModel m;
    m.radii_ = std::move(radii);
    m.kernel_ = std::move(kernel);
    m.temporal_ = temporal;
    m.dt_ = dt;
    m.seed_ = seed;
    m.rng_ = CounterNormal(seed);
    m.min_eigenvalue_ = es.eigenvalues().minCoeff();
    m.max_eigenvalue_ = es.eigenvalues().maxCoeff();
    const double lmax = std::max(m.max_eigenvalue_, 0.0);
    const double rank_tol = double(n) * std::numeric_limits<double>::epsilon() * lmax;
    m.eigenvalues_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        double l = es.eigenvalues()(static_cast<Eigen::Index>(k));
        if (l < 0.0) {
            if (l < -psd_band * lmax)
                throw std::invalid_argument("NoiseModel: kernel not positive semidefinite (eigenvalue " +
                                            std::to_string(l) + ", lambda_max " + std::to_string(lmax) + ")");
            l = 0.0;
            ++m.clamped_;
        }
        if (l > rank_tol) ++m.rank_;
        m.eigenvalues_[k] = l;
    }
    m.eigenvectors_.assign(es.eigenvectors().data(), es.eigenvectors().data() + n * n);

    // Sampling basis, largest modes first.
    std::vector<std::size_t> keep;
    for (std::size_t k = n; k-- > 0;)
        if (m.eigenvalues_[k] > 1e-15 * lmax) keep.push_back(k);
    m.modes_ = keep.size();
    m.basis_.assign(n * m.modes_, 0.0);
    for (std::size_t q = 0; q < m.modes_; ++q) {
        const std::size_t k = keep[q];
        const double s = std::sqrt(m.eigenvalues_[k]);
        for (std::size_t i = 0; i < n; ++i) m.basis_[i * m.modes_ + q] = m.eigenvectors_[k * n + i] * s;
    }
    return m;
}

std::vector<double> NoiseModel::symmetric_sqrt() const {
    const std::size_t n = size();
    Eigen::Map<const Eigen::MatrixXd> V(eigenvectors_.data(), n, n);
    Eigen::VectorXd s(n);
    for (std::size_t k = 0; k < n; ++k) s(k) = std::sqrt(eigenvalues_[k]);
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> S = V * s.asDiagonal() * V.transpose();
    return {S.data(), S.data() + n * n};
}

double NoiseModel::reconstruction_error() const {
    const std::size_t n = size();
    const auto s = symmetric_sqrt();
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> S(s.data(), n, n);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> C(kernel_.data(), n, n);
    const double scale = C.cwiseAbs().maxCoeff();
    if (scale == 0.0) return 0.0;
    return (S * S.transpose() - C).cwiseAbs().maxCoeff() / scale;
}

void NoiseModel::apply_basis(const std::vector<double>& z, std::vector<double>& out) const {
    const std::size_t n = size();
    if (z.size() < modes_) throw std::invalid_argument("NoiseModel::apply_basis: latent vector too short");
    out.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = &basis_[i * modes_];
        double s = 0.0;
        for (std::size_t q = 0; q < modes_; ++q) s += row[q] * z[q];
        out[i] = s;
    }
}

void NoiseModel::draw(std::uint64_t trajectory, std::uint64_t step, std::vector<double>& out) const {
    std::vector<double> z(size());
    rng_.fill(trajectory, step, z);
    apply_basis(z, out);
}

NoiseStream::NoiseStream(const NoiseModel& model, std::uint64_t trajectory)
    : model_(&model), trajectory_(trajectory), z_(model.size()), xi_(model.size()) {}

void NoiseStream::rebind(const NoiseModel& model) {
    if (model.size() != model_->size()) throw std::invalid_argument("NoiseStream::rebind: grid size changed");
    model_ = &model;
}

const std::vector<double>& NoiseStream::next(double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("NoiseStream: dt must be positive");
    const auto& tm = model_->temporal();
    const auto& gen = model_->generator();
    if (tm.mode == TemporalMode::white) {
        gen.fill(trajectory_, step_, z_);
        model_->apply_basis(z_, value_);
        const double f = 1.0 / std::sqrt(dt);
        for (auto& v : value_) v *= f;
    } else {
        if (step_ == 0) {
            gen.fill(trajectory_, 0, z_);
        } else {
            const double phi = std::exp(-dt / tm.correlation_time);
            if (phi < 1.0) {
                gen.fill(trajectory_, step_, xi_);
                const double g = std::sqrt(1.0 - phi * phi);
                for (std::size_t i = 0; i < z_.size(); ++i) z_[i] = phi * z_[i] + g * xi_[i];
            }
        }
        model_->apply_basis(z_, value_);
    }
    ++step_;
    return value_;
}

NoiseRealization sample(const NoiseModel& model, std::size_t n_steps, std::uint64_t trajectory) {
    if (n_steps == 0) throw std::invalid_argument("sample: n_steps must be positive");
    NoiseRealization r;
    r.radii = model.radii();
    r.n_steps = n_steps;
    r.dt = model.dt();
    r.seed = model.seed();
    r.trajectory = trajectory;
    r.temporal = model.temporal();
    r.values.reserve(n_steps * model.size());
    NoiseStream stream(model, trajectory);
    for (std::size_t k = 0; k < n_steps; ++k) {
        const auto& v = stream.next();
        r.values.insert(r.values.end(), v.begin(), v.end());
    }
    return r;
}

void write_binary(const std::string& path, const NoiseRealization& r) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_binary: cannot open " + path);
    out.write(kMagic, 4);
    put(out, kVersion);
    put(out, std::uint32_t{0});
    put(out, static_cast<std::uint64_t>(r.radii.size()));
    put(out, static_cast<std::uint64_t>(r.n_steps));
    put(out, r.dt);
    put(out, r.seed);
    out.write(reinterpret_cast<const char*>(r.radii.data()), std::streamsize(r.radii.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(r.values.data()), std::streamsize(r.values.size() * sizeof(double)));
}

NoiseRealization read_noise_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_noise_binary: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("read_noise_binary: bad magic");
    if (get<std::uint32_t>(in) != kVersion) throw std::runtime_error("read_noise_binary: unsupported version");
    if (get<std::uint32_t>(in) != 0) throw std::runtime_error("read_noise_binary: not a real field");
    NoiseRealization r;
    const auto n = get<std::uint64_t>(in);
    r.n_steps = get<std::uint64_t>(in);
    r.dt = get<double>(in);
    r.seed = get<std::uint64_t>(in);
    r.radii.resize(n);
    r.values.resize(n * r.n_steps);
    in.read(reinterpret_cast<char*>(r.radii.data()), std::streamsize(n * sizeof(double)));
    in.read(reinterpret_cast<char*>(r.values.data()), std::streamsize(r.values.size() * sizeof(double)));
    if (!in) throw std::runtime_error("read_noise_binary: payload truncated");
    return r;
}

void write_csv(const std::string& path, const NoiseRealization& r) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_csv: cannot open " + path);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", r.dt);
    out << "# noise realization n_points=" << r.radii.size() << " n_steps=" << r.n_steps << " dt=" << buf
        << " seed=" << r.seed << " trajectory=" << r.trajectory << " temporal=" << to_string(r.temporal.mode)
        << " (MODEL CHOICE)\n";
    out << "step";
    for (double x : r.radii) {
        std::snprintf(buf, sizeof buf, "%.17g", x);
        out << ",r=" << buf;
    }
    out << '\n';
    for (std::size_t k = 0; k < r.n_steps; ++k) {
        out << k;
        for (std::size_t i = 0; i < r.radii.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", r.at(k, i));
            out << ',' << buf;
        }
        out << '\n';
    }
}

}  // namespace snlab
