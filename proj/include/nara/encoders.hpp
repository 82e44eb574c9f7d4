#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "nara/geo_model.hpp"

namespace nara {

using RowVector = Eigen::RowVectorXd;

inline constexpr int kCodebookRows = 4096;
inline constexpr const char* kEmptyToken = "<empty>";

/// Frozen bag-of-tokens text encoder: every token hashes (FNV-1a 64) to a
/// row of a seeded Gaussian codebook; rows are summed and L2-normalized.
class SemanticEncoder {
public:
    SemanticEncoder(int dim, std::uint64_t codebook_seed);

    int dim() const { return static_cast<int>(codebook_.cols()); }
    std::uint64_t seed() const { return seed_; }

    static std::size_t row_of(std::string_view token);

    /// Unit-norm embedding. The empty multiset maps to the reserved
    /// "<empty>" row.
    RowVector encode(const TokenBag& tokens) const;

private:
    Eigen::MatrixXd codebook_;
    std::uint64_t seed_;
};

/// Square frame a geometry is encoded in: coordinates become
/// (p - center) / (size / 2).
struct WindowFrame {
    Vec2 center;
    double size = 500.0;
};

inline constexpr int kGeometrySamples = 16;
inline constexpr int kFourierFrequencies = 4;
inline constexpr int kFourierDim = 4 * kFourierFrequencies;
inline constexpr int kGeometryDim = kFourierDim + 3 + 2;

/// Layout: [16 mean-pooled Fourier features | one-hot kind (3) |
/// log1p(length) | log1p(area)].
RowVector encode_geometry(const Geometry& g, const WindowFrame& frame);

/// Sample positions used by encode_geometry, exposed for tests.
std::vector<Vec2> geometry_samples(const Geometry& g);

}  // namespace nara
