#include "nara/encoders.hpp"

#include <cmath>
#include <numbers>

#include "nara/geometry_kernel.hpp"
#include "nara/seeding.hpp"
#include "nara/spatial_relations.hpp"

namespace nara {

SemanticEncoder::SemanticEncoder(int dim, std::uint64_t codebook_seed)
    : codebook_(kCodebookRows, dim), seed_(codebook_seed) {
    Rng rng = make_rng(codebook_seed, "semantic-codebook");
    for (Eigen::Index r = 0; r < codebook_.rows(); ++r)
        for (Eigen::Index c = 0; c < codebook_.cols(); ++c) codebook_(r, c) = standard_normal(rng);
}

std::size_t SemanticEncoder::row_of(std::string_view token) {
    return static_cast<std::size_t>(fnv1a64(token) % static_cast<std::uint64_t>(kCodebookRows));
}

RowVector SemanticEncoder::encode(const TokenBag& tokens) const {
    RowVector v = RowVector::Zero(codebook_.cols());
    for (const auto& t : tokens) v += codebook_.row(static_cast<Eigen::Index>(row_of(t)));
    double norm = v.norm();
    if (tokens.empty() || norm == 0.0) {
        v = codebook_.row(static_cast<Eigen::Index>(row_of(kEmptyToken)));
        norm = v.norm();
    }
    return v / norm;
}

std::vector<Vec2> geometry_samples(const Geometry& g) {
    std::vector<Vec2> out;
    out.reserve(kGeometrySamples);
    switch (g.kind) {
        case GeometryKind::Point:
            out.assign(kGeometrySamples, g.coords[0]);
            break;
        case GeometryKind::Polyline:
            for (int k = 0; k < kGeometrySamples; ++k) {
                out.push_back(kernel::point_at_fraction(g.coords, static_cast<double>(k) / (kGeometrySamples - 1)));
            }
            break;
        case GeometryKind::Polygon:
            // closed ring: fraction 1 would repeat fraction 0
            for (int k = 0; k < kGeometrySamples; ++k) {
                out.push_back(kernel::point_at_fraction(g.coords, static_cast<double>(k) / kGeometrySamples));
            }
            break;
    }
    return out;
}

RowVector encode_geometry(const Geometry& g, const WindowFrame& frame) {
    RowVector out = RowVector::Zero(kGeometryDim);
    const double half = 0.5 * frame.size;
    for (const Vec2& p : geometry_samples(g)) {
        const double x = (p.x - frame.center.x) / half;
        const double y = (p.y - frame.center.y) / half;
        for (int k = 0; k < kFourierFrequencies; ++k) {
            const double w = std::numbers::pi * static_cast<double>(1 << k);
            out(4 * k + 0) += std::sin(w * x);
            out(4 * k + 1) += std::cos(w * x);
            out(4 * k + 2) += std::sin(w * y);
            out(4 * k + 3) += std::cos(w * y);
        }
    }
    out.head(kFourierDim) /= static_cast<double>(kGeometrySamples);
    out(kFourierDim + static_cast<int>(g.kind)) = 1.0;
    const GeometryDescriptors d = geometry_descriptors(g);
    out(kFourierDim + 3) = std::log1p(d.length);
    out(kFourierDim + 4) = std::log1p(d.area);
    return out;
}

}  // namespace nara
