#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "brw/common.hpp"

namespace brw {

struct Source {
    Site site;
    double strength = 0.0;

    bool operator==(const Source&) const = default;
};

/**
 * Baseline rate mu (split rate = death rate = mu away from the sources) plus
 * point sources raising the split rate: beta(x) = mu + sum_i sigma_i delta_{x_i}(x).
 */
class PerturbationField {
public:
    PerturbationField() = default;

    PerturbationField(int dim, double mu, std::vector<Source> sources = {})
        : dim_(dim), mu_(mu), sources_(std::move(sources)) {
        require(dim >= 1, "field dimension must be positive");
        if (!(mu >= 0.0) || !std::isfinite(mu)) throw ValidationError("mu must be finite and >= 0");
        for (std::size_t i = 0; i < sources_.size(); ++i) {
            const auto& s = sources_[i];
            if (static_cast<int>(s.site.size()) != dim)
                throw ValidationError("source site has wrong dimension");
            if (!(s.strength > 0.0) || !std::isfinite(s.strength))
                throw ValidationError("source strength must be > 0 at (" + to_string(s.site) + ")");
            for (std::size_t k = 0; k < i; ++k)
                if (sources_[k].site == s.site)
                    throw ValidationError("duplicate source site (" + to_string(s.site) + ")");
            sigma_total_ += s.strength;
        }
    }

    /// One source of strength sigma at the origin; sigma = 0 gives the unperturbed field.
    static PerturbationField single(int dim, double mu, double sigma) {
        if (sigma == 0.0) return PerturbationField(dim, mu);
        return PerturbationField(dim, mu, {{origin(dim), sigma}});
    }

    int dim() const noexcept { return dim_; }
    double mu() const noexcept { return mu_; }
    const std::vector<Source>& sources() const noexcept { return sources_; }
    double sigma_total() const noexcept { return sigma_total_; }

    double potential(const Site& x) const {
        for (const auto& s : sources_)
            if (s.site == x) return s.strength;
        return 0.0;
    }

    /// Split rate at x.
    double beta(const Site& x) const { return mu_ + potential(x); }

    double max_potential() const {
        double m = 0.0;
        for (const auto& s : sources_) m = std::max(m, s.strength);
        return m;
    }

    int max_source_offset() const {
        int m = 0;
        for (const auto& s : sources_) m = std::max(m, norm_inf(s.site));
        return m;
    }

    bool operator==(const PerturbationField&) const = default;

private:
    int dim_ = 1;
    double mu_ = 0.0;
    std::vector<Source> sources_;
    double sigma_total_ = 0.0;
};

}  // namespace brw
