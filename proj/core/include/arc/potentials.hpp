// SPDX-License-Identifier: Apache-2.0
//! \file arc/potentials.hpp
//! Per-sample losses, datasets, mini-batches and constant certificates.
#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "arc/numeric.hpp"
#include "arc/rng.hpp"

namespace arc {

enum class LossFamily { cosine_quadratic, quadratic };

std::string_view to_string(LossFamily family);
LossFamily parse_loss_family(std::string_view name);

//! Constants of the standing assumption: (m, b)-dissipative, M-smooth,
//! sup_z ||grad l(0; z)|| <= A.
struct CertifiedConstants {
    double m = 0.0;
    double b = 0.0;
    double M = 0.0;
    double A = 0.0;
};

enum class DistributionKind { standard_gaussian, truncated_gaussian, uniform_sphere, origin };

std::string_view to_string(DistributionKind kind);
DistributionKind parse_distribution_kind(std::string_view name);

//! Law of a data point z in R^dim.
struct DistributionSpec {
    DistributionKind kind = DistributionKind::uniform_sphere;
    std::size_t dim = 1;
    //! Gaussian standard deviation, or sphere radius.
    double scale = 1.0;
    //! Truncation radius (truncated_gaussian only).
    double truncation = std::numeric_limits<double>::infinity();

    static DistributionSpec gaussian(std::size_t dim, double sigma = 1.0);
    static DistributionSpec truncated_gaussian(std::size_t dim, double sigma, double radius);
    static DistributionSpec uniform_sphere(std::size_t dim, double radius);
    static DistributionSpec origin(std::size_t dim);

    //! sup ||z|| over the support; +inf when unbounded.
    double support_radius() const;
    void validate() const;
    //! Draw one sample into out (size dim).
    void sample(RandomStream& rng, std::span<double> out) const;
};

//! Default b when the completed-square bound gives b = 0 (the assumption needs b > 0).
inline constexpr double kDefaultMinOffset = 1e-4;

/*!
 * A catalog loss l(w; z) with certified constants.
 *
 * cosine_quadratic: l = (m0/2)||w||^2 + a (1 + cos<w, z>)
 *   grad = m0 w - a sin<w, z> z.
 *   <grad, w> = m0||w||^2 - a sin(u) u with u = <w, z>, |sin(u) u| <= |u| <= R||w||,
 *   and a R ||w|| <= s m0 ||w||^2 + a^2 R^2 / (4 s m0) for the split s in (0, 1), so
 *   m = (1 - s) m0, b = a^2 R^2 / (4 s m0). Hessian = m0 I - a cos<w,z> z z^T gives
 *   M = m0 + a R^2, and grad l(0; z) = 0 gives A = 0.
 *
 * quadratic: l = (m0/2)||w - z||^2, grad = m0 (w - z).
 *   R = 0: m = m0, b = min_offset.
 *   R > 0: <m0(w - z), w> >= m0||w||^2 - m0 R||w|| >= (1 - s) m0 ||w||^2 - m0 R^2 / (4 s),
 *   so m = (1 - s) m0, b = m0 R^2 / (4 s). M = m0, A = m0 R.
 *
 * R is the support radius of the data law; it must be finite. The default
 * split s = 1/2 gives m = m0/2.
 */
class PotentialModel {
  public:
    static PotentialModel cosine_quadratic(std::size_t dim, double m0, double amplitude,
                                           double support_radius,
                                           double min_offset = kDefaultMinOffset,
                                           double split = 0.5);
    static PotentialModel quadratic(std::size_t dim, double m0, double support_radius,
                                    double min_offset = kDefaultMinOffset, double split = 0.5);

    //! Same loss, caller-asserted constants (run certify_constants on them).
    PotentialModel with_constants(const CertifiedConstants& constants) const;

    LossFamily family() const { return family_; }
    std::size_t dim() const { return dim_; }
    double m0() const { return m0_; }
    double amplitude() const { return amplitude_; }
    double support_radius() const { return support_radius_; }
    const CertifiedConstants& constants() const { return constants_; }

  private:
    PotentialModel(LossFamily family, std::size_t dim, double m0, double amplitude,
                   double support_radius, CertifiedConstants constants);

    LossFamily family_;
    std::size_t dim_;
    double m0_;
    double amplitude_;
    double support_radius_;
    CertifiedConstants constants_;
};

double eval_loss(const PotentialModel& model, std::span<const double> w,
                 std::span<const double> z);
void grad_loss(const PotentialModel& model, std::span<const double> w, std::span<const double> z,
               std::span<double> out);
Vector grad_loss(const PotentialModel& model, std::span<const double> w,
                 std::span<const double> z);

//! n IID samples stored row-major.
class Dataset {
  public:
    Dataset(std::size_t dim, std::vector<double> values,
            std::optional<DistributionSpec> spec = std::nullopt, std::uint64_t seed = 0);
    static Dataset from_samples(const std::vector<Vector>& samples);

    std::size_t size() const { return dim_ == 0 ? 0 : values_.size() / dim_; }
    std::size_t dim() const { return dim_; }
    std::span<const double> sample(std::size_t i) const {
        return {values_.data() + i * dim_, dim_};
    }
    const std::vector<double>& values() const { return values_; }
    const std::optional<DistributionSpec>& spec() const { return spec_; }
    std::uint64_t seed() const { return seed_; }
    //! max_i ||z_i||.
    double max_norm() const;

  private:
    std::size_t dim_;
    std::vector<double> values_;
    std::optional<DistributionSpec> spec_;
    std::uint64_t seed_;
};

//! n IID draws; a pure function of (spec, n, seed).
Dataset generate_dataset(const DistributionSpec& spec, std::size_t n, std::uint64_t seed);

//! CSV: header z0,...,z{d-1}, one sample per row.
void write_dataset_csv(const Dataset& data, std::ostream& out);
Dataset read_dataset_csv(std::istream& in);
//! Binary: "ARCDS001", u64 n, u64 d, n*d little-endian doubles.
void write_dataset_binary(const Dataset& data, std::ostream& out);
Dataset read_dataset_binary(std::istream& in);

//! Mini-batch drawn without replacement. Indices are 0-based, sorted, distinct.
struct MiniBatchIndex {
    std::vector<std::size_t> indices;
    std::size_t size() const { return indices.size(); }
};

MiniBatchIndex sample_minibatch(std::size_t n, std::size_t batch_size, RandomStream& rng);
//! Allocation-free variant; `scratch` is resized to n.
void sample_minibatch_into(std::size_t n, std::size_t batch_size, RandomStream& rng,
                           MiniBatchIndex& out, std::vector<std::size_t>& scratch);

//! Scratch buffers for pairwise gradient accumulation.
class GradientWorkspace {
  public:
    explicit GradientWorkspace(std::size_t dim = 0) : dim_(dim) {}
    std::span<double> buffer(std::size_t slot);
    std::size_t dim() const { return dim_; }
    void reset(std::size_t dim);

  private:
    std::size_t dim_;
    std::vector<double> storage_;
};

//! (1/n) sum_i grad l(w; z_i), pairwise summation over samples.
void empirical_grad(const PotentialModel& model, std::span<const double> w, const Dataset& data,
                    std::span<double> out, GradientWorkspace& ws);
Vector empirical_grad(const PotentialModel& model, std::span<const double> w, const Dataset& data);

//! (1/B) sum_{i in batch} grad l(w; z_i). Same reduction tree as empirical_grad
//! when the batch is the full index set, so B = n matches it bitwise.
void minibatch_grad(const PotentialModel& model, std::span<const double> w, const Dataset& data,
                    const MiniBatchIndex& batch, std::span<double> out, GradientWorkspace& ws);
Vector minibatch_grad(const PotentialModel& model, std::span<const double> w, const Dataset& data,
                      const MiniBatchIndex& batch);

double empirical_loss(const PotentialModel& model, std::span<const double> w, const Dataset& data);

//! A loss family bound to its training data: L_n(w) = (1/n) sum l(w; z_i).
struct EmpiricalLoss {
    std::shared_ptr<const PotentialModel> model;
    std::shared_ptr<const Dataset> data;

    EmpiricalLoss() = default;
    EmpiricalLoss(PotentialModel m, Dataset d);

    std::size_t dim() const { return model->dim(); }
    double value(std::span<const double> w) const { return empirical_loss(*model, w, *data); }
    void gradient(std::span<const double> w, std::span<double> out, GradientWorkspace& ws) const {
        empirical_grad(*model, w, *data, out, ws);
    }
};

struct CertificationOptions {
    //! Probe points are drawn uniformly from [-box, box]^d.
    double box = 10.0;
    //! Relative slack absorbing rounding in the margins.
    double tolerance = 1e-9;
};

struct ConstantViolation {
    std::string condition;
    Vector w;
    Vector w_prime;
    Vector z;
    double margin = 0.0;
};

struct CertificationReport {
    std::size_t probes = 0;
    double dissipativity_margin = std::numeric_limits<double>::infinity();
    double smoothness_margin = std::numeric_limits<double>::infinity();
    double gradient_at_origin_margin = std::numeric_limits<double>::infinity();
    double nonnegativity_margin = std::numeric_limits<double>::infinity();
    //! Worst witness per violated condition.
    std::vector<ConstantViolation> violations;

    bool passed() const { return violations.empty(); }
};

/*!
 * Randomized falsification of the certified constants. Each probe draws
 * w, z and a partner w' that is either global (uniform in the box) or a
 * local perturbation of w, so the Lipschitz ratio also samples Hessian norms.
 */
CertificationReport certify_constants(const PotentialModel& model, const DistributionSpec& z_law,
                                      std::size_t probes, RandomStream& rng,
                                      const CertificationOptions& options = {});

}  // namespace arc
