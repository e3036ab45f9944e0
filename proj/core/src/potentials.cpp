// SPDX-License-Identifier: Apache-2.0
#include "arc/potentials.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace arc {
namespace {

void require_dim(std::size_t expected, std::size_t got, const char* what) {
    if (expected != got) {
        std::ostringstream msg;
        msg << what << ": dimension mismatch (expected " << expected << ", got " << got << ")";
        throw std::invalid_argument(msg.str());
    }
}

constexpr std::size_t kPairwiseBlock = 8;

// Pairwise sum of grad l(w; z_{index(k)}) for k in [lo, hi) into out.
template <class IndexFn>
void pairwise_grad_sum(const PotentialModel& model, std::span<const double> w,
                       const Dataset& data, IndexFn index, std::size_t lo, std::size_t hi,
                       std::size_t level, std::span<double> out, GradientWorkspace& ws) {
    const std::size_t d = out.size();
    if (hi - lo <= kPairwiseBlock) {
        std::fill(out.begin(), out.end(), 0.0);
        auto tmp = ws.buffer(0);
        for (std::size_t k = lo; k < hi; ++k) {
            grad_loss(model, w, data.sample(index(k)), tmp);
            for (std::size_t j = 0; j < d; ++j) {
                out[j] += tmp[j];
            }
        }
        return;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    pairwise_grad_sum(model, w, data, index, lo, mid, level + 1, out, ws);
    auto right = ws.buffer(level + 1);
    pairwise_grad_sum(model, w, data, index, mid, hi, level + 1, right, ws);
    for (std::size_t j = 0; j < d; ++j) {
        out[j] += right[j];
    }
}

// Sizes the workspace up front so spans into it stay valid during recursion.
void reserve_pairwise(GradientWorkspace& ws, std::size_t count) {
    std::size_t depth = 0;
    for (std::size_t m = count; m > kPairwiseBlock; m = (m + 1) / 2) {
        ++depth;
    }
    ws.buffer(depth + 1);
}

}  // namespace

std::string_view to_string(LossFamily family) {
    switch (family) {
        case LossFamily::cosine_quadratic:
            return "cosine_quadratic";
        case LossFamily::quadratic:
            return "quadratic";
    }
    return "unknown";
}

LossFamily parse_loss_family(std::string_view name) {
    if (name == "cosine_quadratic") return LossFamily::cosine_quadratic;
    if (name == "quadratic") return LossFamily::quadratic;
    throw std::invalid_argument("unknown loss family '" + std::string(name) + "'");
}

std::string_view to_string(DistributionKind kind) {
    switch (kind) {
        case DistributionKind::standard_gaussian:
            return "gaussian";
        case DistributionKind::truncated_gaussian:
            return "truncated_gaussian";
        case DistributionKind::uniform_sphere:
            return "uniform_sphere";
        case DistributionKind::origin:
            return "origin";
    }
    return "unknown";
}

DistributionKind parse_distribution_kind(std::string_view name) {
    if (name == "gaussian") return DistributionKind::standard_gaussian;
    if (name == "truncated_gaussian") return DistributionKind::truncated_gaussian;
    if (name == "uniform_sphere") return DistributionKind::uniform_sphere;
    if (name == "origin") return DistributionKind::origin;
    throw std::invalid_argument("unsupported distribution '" + std::string(name) + "'");
}

DistributionSpec DistributionSpec::gaussian(std::size_t dim, double sigma) {
    return {DistributionKind::standard_gaussian, dim, sigma,
            std::numeric_limits<double>::infinity()};
}

DistributionSpec DistributionSpec::truncated_gaussian(std::size_t dim, double sigma,
                                                      double radius) {
    return {DistributionKind::truncated_gaussian, dim, sigma, radius};
}

DistributionSpec DistributionSpec::uniform_sphere(std::size_t dim, double radius) {
    return {DistributionKind::uniform_sphere, dim, radius,
            std::numeric_limits<double>::infinity()};
}

DistributionSpec DistributionSpec::origin(std::size_t dim) {
    return {DistributionKind::origin, dim, 0.0, std::numeric_limits<double>::infinity()};
}

double DistributionSpec::support_radius() const {
    switch (kind) {
        case DistributionKind::standard_gaussian:
            return std::numeric_limits<double>::infinity();
        case DistributionKind::truncated_gaussian:
            return truncation;
        case DistributionKind::uniform_sphere:
            return scale;
        case DistributionKind::origin:
            return 0.0;
    }
    return std::numeric_limits<double>::infinity();
}

void DistributionSpec::validate() const {
    if (dim == 0) {
        throw std::invalid_argument("distribution: dimension must be positive");
    }
    if (kind != DistributionKind::origin && !(scale > 0.0)) {
        throw std::invalid_argument("distribution: scale must be positive");
    }
    if (kind == DistributionKind::truncated_gaussian && !(truncation > 0.0 && std::isfinite(truncation))) {
        throw std::invalid_argument("distribution: truncation radius must be positive and finite");
    }
}

void DistributionSpec::sample(RandomStream& rng, std::span<double> out) const {
    require_dim(dim, out.size(), "DistributionSpec::sample");
    switch (kind) {
        case DistributionKind::origin:
            std::fill(out.begin(), out.end(), 0.0);
            return;
        case DistributionKind::standard_gaussian:
            for (auto& v : out) v = scale * rng.normal();
            return;
        case DistributionKind::truncated_gaussian:
            for (;;) {
                for (auto& v : out) v = scale * rng.normal();
                if (norm(out) <= truncation) return;
            }
        case DistributionKind::uniform_sphere: {
            double r = 0.0;
            while (r == 0.0) {
                for (auto& v : out) v = rng.normal();
                r = norm(out);
            }
            for (auto& v : out) v *= scale / r;
            return;
        }
    }
}

PotentialModel::PotentialModel(LossFamily family, std::size_t dim, double m0, double amplitude,
                               double support_radius, CertifiedConstants constants)
    : family_(family),
      dim_(dim),
      m0_(m0),
      amplitude_(amplitude),
      support_radius_(support_radius),
      constants_(constants) {}

PotentialModel PotentialModel::cosine_quadratic(std::size_t dim, double m0, double amplitude,
                                                double support_radius, double min_offset,
                                                double split) {
    if (dim == 0 || !(m0 > 0.0) || !(amplitude >= 0.0) || !(support_radius >= 0.0) ||
        !(min_offset > 0.0)) {
        throw std::invalid_argument("cosine_quadratic: need dim > 0, m0 > 0, a >= 0, R >= 0");
    }
    if (!(split > 0.0 && split < 1.0)) {
        throw std::invalid_argument("cosine_quadratic: split must lie in (0, 1)");
    }
    if (!std::isfinite(support_radius)) {
        throw std::invalid_argument(
            "cosine_quadratic: data law must be compactly supported (finite radius)");
    }
    const double r2 = support_radius * support_radius;
    CertifiedConstants c;
    c.m = (1.0 - split) * m0;
    c.b = std::max(amplitude * amplitude * r2 / (4.0 * split * m0), min_offset);
    c.M = m0 + amplitude * r2;
    c.A = 0.0;
    return {LossFamily::cosine_quadratic, dim, m0, amplitude, support_radius, c};
}

PotentialModel PotentialModel::quadratic(std::size_t dim, double m0, double support_radius,
                                         double min_offset, double split) {
    if (dim == 0 || !(m0 > 0.0) || !(support_radius >= 0.0) || !(min_offset > 0.0)) {
        throw std::invalid_argument("quadratic: need dim > 0, m0 > 0, R >= 0");
    }
    if (!(split > 0.0 && split < 1.0)) {
        throw std::invalid_argument("quadratic: split must lie in (0, 1)");
    }
    if (!std::isfinite(support_radius)) {
        throw std::invalid_argument("quadratic: data law must be compactly supported");
    }
    CertifiedConstants c;
    if (support_radius == 0.0) {
        c.m = m0;
        c.b = min_offset;
    } else {
        c.m = (1.0 - split) * m0;
        c.b = std::max(m0 * support_radius * support_radius / (4.0 * split), min_offset);
    }
    c.M = m0;
    c.A = m0 * support_radius;
    return {LossFamily::quadratic, dim, m0, 0.0, support_radius, c};
}

PotentialModel PotentialModel::with_constants(const CertifiedConstants& constants) const {
    PotentialModel copy = *this;
    copy.constants_ = constants;
    return copy;
}

double eval_loss(const PotentialModel& model, std::span<const double> w,
                 std::span<const double> z) {
    require_dim(model.dim(), w.size(), "eval_loss");
    require_dim(model.dim(), z.size(), "eval_loss");
    switch (model.family()) {
        case LossFamily::cosine_quadratic:
            return 0.5 * model.m0() * dot(w, w) + model.amplitude() * (1.0 + std::cos(dot(w, z)));
        case LossFamily::quadratic:
            return 0.5 * model.m0() * squared_distance(w, z);
    }
    return 0.0;
}

void grad_loss(const PotentialModel& model, std::span<const double> w, std::span<const double> z,
               std::span<double> out) {
    const std::size_t d = model.dim();
    if (w.size() != d || z.size() != d || out.size() != d) {
        require_dim(d, w.size(), "grad_loss");
        require_dim(d, z.size(), "grad_loss");
        require_dim(d, out.size(), "grad_loss");
    }
    switch (model.family()) {
        case LossFamily::cosine_quadratic: {
            const double s = model.amplitude() * std::sin(dot(w, z));
            for (std::size_t j = 0; j < d; ++j) {
                out[j] = model.m0() * w[j] - s * z[j];
            }
            return;
        }
        case LossFamily::quadratic:
            for (std::size_t j = 0; j < d; ++j) {
                out[j] = model.m0() * (w[j] - z[j]);
            }
            return;
    }
}

Vector grad_loss(const PotentialModel& model, std::span<const double> w,
                 std::span<const double> z) {
    Vector out(model.dim());
    grad_loss(model, w, z, out);
    return out;
}

Dataset::Dataset(std::size_t dim, std::vector<double> values,
                 std::optional<DistributionSpec> spec, std::uint64_t seed)
    : dim_(dim), values_(std::move(values)), spec_(spec), seed_(seed) {
    if (dim_ == 0 || values_.size() % dim_ != 0) {
        throw std::invalid_argument("Dataset: value count is not a multiple of the dimension");
    }
}

Dataset Dataset::from_samples(const std::vector<Vector>& samples) {
    if (samples.empty()) {
        throw std::invalid_argument("Dataset: empty sample list");
    }
    const std::size_t d = samples.front().size();
    std::vector<double> values;
    values.reserve(samples.size() * d);
    for (const auto& s : samples) {
        require_dim(d, s.size(), "Dataset::from_samples");
        values.insert(values.end(), s.begin(), s.end());
    }
    return Dataset(d, std::move(values));
}

double Dataset::max_norm() const {
    double r = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
        r = std::max(r, norm(sample(i)));
    }
    return r;
}

Dataset generate_dataset(const DistributionSpec& spec, std::size_t n, std::uint64_t seed) {
    spec.validate();
    if (n == 0) {
        throw std::invalid_argument("generate_dataset: n must be >= 1");
    }
    RandomStream rng(derive_stream_id(seed, "dataset", 0, StreamPurpose::data));
    std::vector<double> values(n * spec.dim);
    for (std::size_t i = 0; i < n; ++i) {
        spec.sample(rng, {values.data() + i * spec.dim, spec.dim});
    }
    return Dataset(spec.dim, std::move(values), spec, seed);
}

void write_dataset_csv(const Dataset& data, std::ostream& out) {
    for (std::size_t j = 0; j < data.dim(); ++j) {
        out << (j ? "," : "") << 'z' << j;
    }
    out << '\n';
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto z = data.sample(i);
        for (std::size_t j = 0; j < z.size(); ++j) {
            out << (j ? "," : "") << format_real(z[j]);
        }
        out << '\n';
    }
}

Dataset read_dataset_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error("read_dataset_csv: missing header");
    }
    const std::size_t dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
    std::vector<double> values;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        std::size_t cols = 0;
        while (std::getline(row, cell, ',')) {
            values.push_back(std::stod(cell));
            ++cols;
        }
        if (cols != dim) {
            throw std::runtime_error("read_dataset_csv: ragged row");
        }
    }
    if (values.empty()) {
        throw std::runtime_error("read_dataset_csv: no samples");
    }
    return Dataset(dim, std::move(values));
}

namespace {
constexpr char kBinaryMagic[8] = {'A', 'R', 'C', 'D', 'S', '0', '0', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
        throw std::runtime_error("read_dataset_binary: truncated header");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
}
}  // namespace

void write_dataset_binary(const Dataset& data, std::ostream& out) {
    out.write(kBinaryMagic, sizeof kBinaryMagic);
    write_u64(out, data.size());
    write_u64(out, data.dim());
    for (double v : data.values()) {
        write_u64(out, std::bit_cast<std::uint64_t>(v));
    }
}

Dataset read_dataset_binary(std::istream& in) {
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kBinaryMagic, 8) != 0) {
        throw std::runtime_error("read_dataset_binary: bad magic");
    }
    const std::uint64_t n = read_u64(in);
    const std::uint64_t d = read_u64(in);
    std::vector<double> values(n * d);
    for (auto& v : values) {
        v = std::bit_cast<double>(read_u64(in));
    }
    return Dataset(d, std::move(values));
}

MiniBatchIndex sample_minibatch(std::size_t n, std::size_t batch_size, RandomStream& rng) {
    MiniBatchIndex out;
    std::vector<std::size_t> scratch;
    sample_minibatch_into(n, batch_size, rng, out, scratch);
    return out;
}

void sample_minibatch_into(std::size_t n, std::size_t batch_size, RandomStream& rng,
                           MiniBatchIndex& out, std::vector<std::size_t>& scratch) {
    if (batch_size == 0 || batch_size > n) {
        throw std::invalid_argument("sample_minibatch: need 1 <= B <= n");
    }
    scratch.resize(n);
    for (std::size_t i = 0; i < n; ++i) scratch[i] = i;
    // Partial Fisher-Yates: the first B slots are a uniform B-subset.
    for (std::size_t k = 0; k < batch_size; ++k) {
        const std::size_t j = k + static_cast<std::size_t>(rng.uniform_index(n - k));
        std::swap(scratch[k], scratch[j]);
    }
    out.indices.assign(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(batch_size));
    std::sort(out.indices.begin(), out.indices.end());
}

std::span<double> GradientWorkspace::buffer(std::size_t slot) {
    const std::size_t needed = (slot + 1) * dim_;
    if (storage_.size() < needed) {
        storage_.resize(needed);
    }
    return {storage_.data() + slot * dim_, dim_};
}

void GradientWorkspace::reset(std::size_t dim) {
    dim_ = dim;
    storage_.clear();
}

void empirical_grad(const PotentialModel& model, std::span<const double> w, const Dataset& data,
                    std::span<double> out, GradientWorkspace& ws) {
    if (data.size() == 0) {
        throw std::invalid_argument("empirical_grad: empty dataset");
    }
    require_dim(model.dim(), out.size(), "empirical_grad");
    if (ws.dim() != model.dim()) ws.reset(model.dim());
    reserve_pairwise(ws, data.size());
    pairwise_grad_sum(model, w, data, [](std::size_t k) { return k; }, 0, data.size(), 0, out, ws);
    const double inv = 1.0 / static_cast<double>(data.size());
    for (auto& v : out) v *= inv;
}

Vector empirical_grad(const PotentialModel& model, std::span<const double> w, const Dataset& data) {
    Vector out(model.dim());
    GradientWorkspace ws(model.dim());
    empirical_grad(model, w, data, out, ws);
    return out;
}

void minibatch_grad(const PotentialModel& model, std::span<const double> w, const Dataset& data,
                    const MiniBatchIndex& batch, std::span<double> out, GradientWorkspace& ws) {
    if (batch.indices.empty()) {
        throw std::invalid_argument("minibatch_grad: empty batch");
    }
    for (std::size_t i : batch.indices) {
        if (i >= data.size()) {
            throw std::out_of_range("minibatch_grad: index out of range");
        }
    }
    require_dim(model.dim(), out.size(), "minibatch_grad");
    if (ws.dim() != model.dim()) ws.reset(model.dim());
    const auto& idx = batch.indices;
    reserve_pairwise(ws, idx.size());
    pairwise_grad_sum(model, w, data, [&idx](std::size_t k) { return idx[k]; }, 0, idx.size(), 0,
                      out, ws);
    const double inv = 1.0 / static_cast<double>(idx.size());
    for (auto& v : out) v *= inv;
}

Vector minibatch_grad(const PotentialModel& model, std::span<const double> w, const Dataset& data,
                      const MiniBatchIndex& batch) {
    Vector out(model.dim());
    GradientWorkspace ws(model.dim());
    minibatch_grad(model, w, data, batch, out, ws);
    return out;
}

double empirical_loss(const PotentialModel& model, std::span<const double> w,
                      const Dataset& data) {
    if (data.size() == 0) {
        throw std::invalid_argument("empirical_loss: empty dataset");
    }
    std::vector<double> values(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        values[i] = eval_loss(model, w, data.sample(i));
    }
    return pairwise_sum(values) / static_cast<double>(data.size());
}

EmpiricalLoss::EmpiricalLoss(PotentialModel m, Dataset d)
    : model(std::make_shared<const PotentialModel>(std::move(m))),
      data(std::make_shared<const Dataset>(std::move(d))) {
    if (model->dim() != data->dim()) {
        throw std::invalid_argument("EmpiricalLoss: model and dataset dimensions differ");
    }
}

CertificationReport certify_constants(const PotentialModel& model, const DistributionSpec& z_law,
                                      std::size_t probes, RandomStream& rng,
                                      const CertificationOptions& options) {
    if (probes == 0) {
        throw std::invalid_argument("certify_constants: probes must be >= 1");
    }
    require_dim(model.dim(), z_law.dim, "certify_constants");
    const std::size_t d = model.dim();
    const auto& c = model.constants();
    const double tol = options.tolerance;

    CertificationReport report;
    report.probes = probes;
    Vector w(d), wp(d), z(d), g(d), gp(d), zero(d, 0.0);

    // Keeps the worst witness per condition.
    auto record = [&](const char* condition, double margin, double scale) {
        if (margin >= -tol * (1.0 + scale)) return;
        auto it = std::find_if(report.violations.begin(), report.violations.end(),
                               [&](const ConstantViolation& v) { return v.condition == condition; });
        if (it == report.violations.end()) {
            report.violations.push_back({condition, w, wp, z, margin});
        } else if (margin < it->margin) {
            *it = {condition, w, wp, z, margin};
        }
    };

    for (std::size_t p = 0; p < probes; ++p) {
        for (auto& v : w) v = options.box * (2.0 * rng.uniform() - 1.0);
        z_law.sample(rng, z);
        if (p % 2 == 0) {
            for (auto& v : wp) v = options.box * (2.0 * rng.uniform() - 1.0);
        } else {
            const double step = 1e-4 * options.box;
            for (std::size_t j = 0; j < d; ++j) wp[j] = w[j] + step * rng.normal();
        }

        grad_loss(model, w, z, g);
        const double w2 = dot(w, w);
        const double diss = dot(g, w) - (c.m * w2 - c.b);
        report.dissipativity_margin = std::min(report.dissipativity_margin, diss);
        record("dissipativity", diss, c.m * w2 + c.b);

        grad_loss(model, wp, z, gp);
        const double gap = distance(w, wp);
        const double smooth = c.M * gap - distance(g, gp);
        report.smoothness_margin = std::min(report.smoothness_margin, smooth);
        record("smoothness", smooth, c.M * gap);

        grad_loss(model, zero, z, gp);
        const double origin = c.A - norm(gp);
        report.gradient_at_origin_margin = std::min(report.gradient_at_origin_margin, origin);
        record("gradient_at_origin", origin, c.A);

        const double loss = eval_loss(model, w, z);
        report.nonnegativity_margin = std::min(report.nonnegativity_margin, loss);
        record("nonnegativity", loss, 0.0);
    }
    return report;
}

}  // namespace arc
