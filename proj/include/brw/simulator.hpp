#pragma once

// Event-driven simulation of the branching random walk particle field and the
// Monte Carlo estimators built on it.

#include <algorithm>
#include <atomic>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <cstdint>
#include <limits>
#include <exception>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "brw/common.hpp"
#include "brw/jump_kernel.hpp"
#include "brw/perturbation.hpp"

namespace brw {

// ---------------------------------------------------------------------------
// Random numbers

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of replica r: a fixed mix of the master seed and the replica index.
inline std::uint64_t replica_seed(std::uint64_t master, std::uint64_t replica) {
    return splitmix64(master ^ splitmix64(replica + 0x632be59bd9b4e019ULL));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1].
    double open_uniform() { return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53; }

    /// Exponential with the given rate.
    double exponential(double rate) { return -std::log(open_uniform()) / rate; }

    std::uint64_t bits() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

/// Cumulative jump table; pick(u) maps u in [0, 1) to a jump drawn from a(.).
class JumpSampler {
public:
    explicit JumpSampler(const JumpKernel& k) {
        double c = 0.0;
        for (const auto& j : k.support()) {
            c += j.rate;
            cumulative_.push_back(c);
            jumps_.push_back(j.z);
        }
        cumulative_.back() = 1.0;
    }

    const Site& pick(double u) const {
        std::size_t i = 0;
        while (u >= cumulative_[i] && i + 1 < cumulative_.size()) ++i;
        return jumps_[i];
    }

private:
    std::vector<double> cumulative_;
    std::vector<Site> jumps_;
};

// ---------------------------------------------------------------------------
// Configuration and per-replica results

enum class InitMode {
    window,  ///< one particle at every site of the cube |x|_inf <= W
    single,  ///< one particle at `start`
};

inline const char* to_string(InitMode m) { return m == InitMode::window ? "window" : "single"; }

struct SimConfig {
    JumpKernel kernel = JumpKernel::simple(1);
    PerturbationField field;
    InitMode init = InitMode::single;
    int window = 0;                   ///< W for InitMode::window
    Site start;                       ///< InitMode::single; empty means the origin
    double t_end = 1.0;
    std::vector<double> checkpoints;  ///< increasing, in [0, t_end]
    std::vector<Site> probes;         ///< sites whose counts are recorded
    int observation = -1;             ///< half-width of the occupancy window; < 0 disables it
    std::size_t particle_cap = 10'000'000;
    bool record_positions = false;    ///< keep every particle position at each checkpoint
};

struct Snapshot {
    double time = 0.0;
    std::size_t population = 0;
    std::vector<std::int32_t> probe_counts;
    double occupied_fraction = 0.0;
    std::size_t islands = 0;
    double mean_island = 0.0;
    std::size_t max_island = 0;
    std::vector<Site> positions;
};

struct Trajectory {
    std::uint64_t seed = 0;
    std::uint64_t replica = 0;
    std::vector<Snapshot> snapshots;
    std::uint64_t jumps = 0, splits = 0, deaths = 0, null_events = 0;
    double rate_integral = 0.0;  ///< \int_0^t (total event rate) ds
    double final_time = 0.0;
    bool truncated = false;      ///< stopped at the particle cap
};

/**
 * Live state of one replica: particle positions in a flat array plus counts on
 * the source sites, which are the only places where the event rate differs
 * from 1 + 2 mu.
 */
class ParticleField {
public:
    ParticleField(const SimConfig& cfg, std::uint64_t seed)
        : cfg_(cfg), d_(cfg.kernel.dim()), rng_(seed), sampler_(cfg.kernel) {
        require(cfg.field.dim() == d_, "field and kernel dimensions differ");
        const double mu = cfg.field.mu();
        rate_max_ = 1.0 + 2.0 * mu + cfg.field.max_potential();
        for (const auto& s : cfg.field.sources()) {
            source_sites_.push_back(s.site);
            source_strength_.push_back(s.strength);
        }
        source_count_.assign(source_sites_.size(), 0);
        if (cfg.init == InitMode::single) {
            Site s = cfg.start.empty() ? origin(d_) : cfg.start;
            require(static_cast<int>(s.size()) == d_, "start site has wrong dimension");
            add(s.data());
        } else {
            require(cfg.window >= 0, "window half-width must be >= 0");
            Site x(static_cast<std::size_t>(d_), -cfg.window);
            while (true) {
                add(x.data());
                int c = d_ - 1;
                for (; c >= 0; --c) {
                    if (++x[c] <= cfg.window) break;
                    x[c] = -cfg.window;
                }
                if (c < 0) break;
            }
        }
    }

    std::size_t population() const noexcept { return count_; }
    double time() const noexcept { return time_; }
    Rng& rng() noexcept { return rng_; }

    /// Sum over particles of (1 + beta(x) + mu).
    double total_rate() const {
        double r = static_cast<double>(count_) * (1.0 + 2.0 * cfg_.field.mu());
        for (std::size_t k = 0; k < source_count_.size(); ++k) r += source_count_[k] * source_strength_[k];
        return r;
    }

    /// Recomputes the total rate from positions; equals total_rate() up to rounding.
    double total_rate_from_scratch() const {
        double r = 0.0;
        for (std::size_t i = 0; i < count_; ++i) {
            Site x(pos_.begin() + static_cast<std::ptrdiff_t>(i * d_),
                   pos_.begin() + static_cast<std::ptrdiff_t>((i + 1) * d_));
            r += 1.0 + cfg_.field.beta(x) + cfg_.field.mu();
        }
        return r;
    }

    /// Occupied site counts (sparse, every stored count >= 1).
    std::map<Site, int> site_counts() const {
        std::map<Site, int> m;
        for (std::size_t i = 0; i < count_; ++i)
            ++m[Site(pos_.begin() + static_cast<std::ptrdiff_t>(i * d_),
                     pos_.begin() + static_cast<std::ptrdiff_t>((i + 1) * d_))];
        return m;
    }

    const int* position(std::size_t i) const { return pos_.data() + i * d_; }

    /**
     * Advances to `until` (or extinction). Uniform particle choice with thinning
     * by rate(x)/rate_max is exact in law: each particle fires at its own rate.
     * Returns false when the particle cap stops the run.
     */
    bool advance(double until, Trajectory& stats) {
        const double mu = cfg_.field.mu();
        while (count_ > 0) {
            const double bound = static_cast<double>(count_) * rate_max_;
            const double dt = rng_.exponential(bound);
            if (time_ + dt > until) {
                stats.rate_integral += total_rate() * (until - time_);
                time_ = until;
                return true;
            }
            stats.rate_integral += total_rate() * dt;
            time_ += dt;
            // Integer part picks the particle, the fraction picks the event.
            const double pick = rng_.uniform() * static_cast<double>(count_);
            const std::size_t i = std::min(static_cast<std::size_t>(pick), count_ - 1);
            const double u = (pick - static_cast<double>(i)) * rate_max_;
            int* x = pos_.data() + i * d_;
            const int src = source_of(x);
            const double beta = mu + (src >= 0 ? source_strength_[src] : 0.0);
            if (u < 1.0) {
                const Site& z = sampler_.pick(u);
                if (src >= 0) --source_count_[src];
                for (int c = 0; c < d_; ++c) x[c] += z[c];
                const int dst = source_of(x);
                if (dst >= 0) ++source_count_[dst];
                ++stats.jumps;
            } else if (u < 1.0 + beta) {
                if (count_ >= cfg_.particle_cap) return false;
                add_copy(i, src);
                ++stats.splits;
            } else if (u < 1.0 + beta + mu) {
                remove(i, src);
                ++stats.deaths;
            } else {
                ++stats.null_events;
            }
        }
        time_ = until;
        return true;
    }

private:
    int source_of(const int* x) const {
        for (std::size_t k = 0; k < source_sites_.size(); ++k)
            if (std::equal(x, x + d_, source_sites_[k].begin())) return static_cast<int>(k);
        return -1;
    }

    void add(const int* x) {
        pos_.insert(pos_.end(), x, x + d_);
        ++count_;
        const int src = source_of(x);
        if (src >= 0) ++source_count_[src];
    }

    void add_copy(std::size_t i, int src) {
        pos_.resize((count_ + 1) * d_);
        std::copy_n(pos_.begin() + static_cast<std::ptrdiff_t>(i * d_), d_,
                    pos_.begin() + static_cast<std::ptrdiff_t>(count_ * d_));
        ++count_;
        if (src >= 0) ++source_count_[src];
    }

    void remove(std::size_t i, int src) {
        if (src >= 0) --source_count_[src];
        --count_;
        if (i != count_)
            std::copy_n(pos_.begin() + static_cast<std::ptrdiff_t>(count_ * d_), d_,
                        pos_.begin() + static_cast<std::ptrdiff_t>(i * d_));
        pos_.resize(count_ * d_);
    }

    const SimConfig& cfg_;
    int d_;
    Rng rng_;
    JumpSampler sampler_;
    double rate_max_ = 1.0;
    double time_ = 0.0;
    std::size_t count_ = 0;
    std::vector<int> pos_;
    std::vector<Site> source_sites_;
    std::vector<double> source_strength_;
    std::vector<long> source_count_;
};

namespace detail {

// Dense counting grid over the cube |x|_inf <= half around the origin.
class CountGrid {
public:
    CountGrid(int dim, int half) : dim_(dim), half_(half), side_(2 * half + 1) {
        std::size_t n = 1;
        for (int c = 0; c < dim; ++c) n *= static_cast<std::size_t>(side_);
        counts_.assign(n, 0);
    }

    void fill(const ParticleField& f) {
        std::fill(counts_.begin(), counts_.end(), 0);
        for (std::size_t i = 0; i < f.population(); ++i)
            if (auto k = index(f.position(i))) ++counts_[*k];
    }

    std::optional<std::size_t> index(const int* x) const {
        std::size_t k = 0;
        for (int c = 0; c < dim_; ++c) {
            const int u = x[c] + half_;
            if (u < 0 || u >= side_) return std::nullopt;
            k = k * side_ + static_cast<std::size_t>(u);
        }
        return k;
    }

    std::int32_t at(const Site& x) const {
        auto k = index(x.data());
        return k ? counts_[*k] : 0;
    }

    /// Occupied fraction and nearest-neighbour connected components within |x|_inf <= h.
    void occupancy(int h, Snapshot& s) const {
        const int side = 2 * h + 1;
        std::size_t total = 1;
        for (int c = 0; c < dim_; ++c) total *= static_cast<std::size_t>(side);
        std::vector<char> seen(total, 0);
        std::vector<std::size_t> stack;
        std::size_t occupied = 0, islands = 0, largest = 0, sum = 0;
        Site x(static_cast<std::size_t>(dim_));
        auto decode = [&](std::size_t k) {
            for (int c = dim_ - 1; c >= 0; --c) {
                x[c] = static_cast<int>(k % side) - h;
                k /= side;
            }
        };
        auto local = [&](const Site& y) -> std::optional<std::size_t> {
            std::size_t k = 0;
            for (int c = 0; c < dim_; ++c) {
                if (y[c] < -h || y[c] > h) return std::nullopt;
                k = k * side + static_cast<std::size_t>(y[c] + h);
            }
            return k;
        };
        for (std::size_t k = 0; k < total; ++k) {
            decode(k);
            if (at(x) <= 0) continue;
            ++occupied;
            if (seen[k]) continue;
            ++islands;
            std::size_t size = 0;
            seen[k] = 1;
            stack.push_back(k);
            while (!stack.empty()) {
                const std::size_t cur = stack.back();
                stack.pop_back();
                ++size;
                decode(cur);
                Site y = x;
                for (int c = 0; c < dim_; ++c)
                    for (int step : {-1, 1}) {
                        y[c] += step;
                        if (auto n = local(y); n && !seen[*n] && at(y) > 0) {
                            seen[*n] = 1;
                            stack.push_back(*n);
                        }
                        y[c] -= step;
                    }
            }
            largest = std::max(largest, size);
            sum += size;
        }
        s.occupied_fraction = static_cast<double>(occupied) / static_cast<double>(total);
        s.islands = islands;
        s.max_island = largest;
        s.mean_island = islands ? static_cast<double>(sum) / static_cast<double>(islands) : 0.0;
    }

private:
    int dim_, half_, side_;
    std::vector<std::int32_t> counts_;
};

inline int count_grid_half(const SimConfig& cfg) {
    int h = std::max(cfg.observation, 0);
    for (const auto& p : cfg.probes) h = std::max(h, norm_inf(p));
    return h;
}

}  // namespace detail

inline std::vector<double> simulation_checkpoints(const SimConfig& cfg) {
    require(cfg.t_end >= 0.0 && std::isfinite(cfg.t_end), "t_end must be finite and >= 0");
    std::vector<double> c = cfg.checkpoints;
    require(std::is_sorted(c.begin(), c.end()), "checkpoints must increase");
    for (double t : c) require(t >= 0.0 && t <= cfg.t_end, "checkpoint outside [0, t_end]");
    if (c.empty() || c.back() < cfg.t_end) c.push_back(cfg.t_end);
    return c;
}

/**
 * One replica from seed replica_seed(master, r). Throws PopulationExplosion when
 * the particle cap is reached unless `partial` is set, in which case the
 * trajectory is returned truncated.
 */
inline Trajectory run_field(const SimConfig& cfg, std::uint64_t master_seed, std::uint64_t replica,
                            bool partial = false) {
    for (const auto& p : cfg.probes)
        require(static_cast<int>(p.size()) == cfg.kernel.dim(), "probe site has wrong dimension");
    const auto checkpoints = simulation_checkpoints(cfg);
    Trajectory tr;
    tr.replica = replica;
    tr.seed = replica_seed(master_seed, replica);
    ParticleField field(cfg, tr.seed);
    detail::CountGrid grid(cfg.kernel.dim(), detail::count_grid_half(cfg));
    for (double t : checkpoints) {
        if (!field.advance(t, tr)) {
            tr.truncated = true;
            tr.final_time = field.time();
            if (!partial)
                throw PopulationExplosion("particle cap " + std::to_string(cfg.particle_cap) +
                                          " reached at t = " + std::to_string(field.time()));
            return tr;
        }
        Snapshot s;
        s.time = t;
        s.population = field.population();
        grid.fill(field);
        for (const auto& p : cfg.probes) s.probe_counts.push_back(grid.at(p));
        if (cfg.observation >= 0) grid.occupancy(cfg.observation, s);
        if (cfg.record_positions)
            for (std::size_t i = 0; i < field.population(); ++i)
                s.positions.emplace_back(field.position(i), field.position(i) + cfg.kernel.dim());
        tr.snapshots.push_back(std::move(s));
    }
    tr.final_time = field.time();
    return tr;
}

/// Runs `f(r)` for r in [0, n) on `threads` workers; results land at index r.
template <class T, class F>
std::vector<T> parallel_replicas(std::size_t n, unsigned threads, F&& f) {
    std::vector<T> out(n);
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (threads == 1) {
        for (std::size_t r = 0; r < n; ++r) out[r] = f(r);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t r; (r = next++) < n;) out[r] = f(r);
            } catch (...) {
                errors[w] = std::current_exception();
                next = n;
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

/// Replica-indexed collection of trajectories; merge order never depends on scheduling.
struct SimStats {
    SimConfig config;
    std::uint64_t master_seed = 0;
    std::vector<double> checkpoints;
    std::vector<Trajectory> replicas;
    std::size_t truncated = 0;
};

inline SimStats run_replicas(const SimConfig& cfg, std::size_t replicas, std::uint64_t master_seed,
                             unsigned threads = 1, bool partial = true) {
    if (replicas == 0) throw ValidationError("replicas must be >= 1");
    SimStats s;
    s.config = cfg;
    s.master_seed = master_seed;
    s.checkpoints = simulation_checkpoints(cfg);
    s.replicas = parallel_replicas<Trajectory>(replicas, threads, [&](std::size_t r) {
        return run_field(cfg, master_seed, r, partial);
    });
    for (const auto& t : s.replicas) s.truncated += t.truncated ? 1 : 0;
    return s;
}

// ---------------------------------------------------------------------------
// Estimators

struct Interval {
    double mean = 0.0;
    double se = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::size_t samples = 0;
};

inline double z_quantile(double confidence) {
    boost::math::normal n;
    return boost::math::quantile(n, 0.5 + 0.5 * confidence);
}

/// Mean, standard error and normal-approximation confidence interval.
inline Interval summarize(const std::vector<double>& v, double confidence = 0.95) {
    Interval r;
    r.samples = v.size();
    if (v.empty()) return r;
    CompensatedSum s;
    for (double x : v) s.add(x);
    r.mean = s.value() / static_cast<double>(v.size());
    if (v.size() >= 2) {
        CompensatedSum q;
        for (double x : v) q.add((x - r.mean) * (x - r.mean));
        r.se = std::sqrt(q.value() / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
    }
    const double z = z_quantile(confidence);
    r.lo = r.mean - z * r.se;
    r.hi = r.mean + z * r.se;
    return r;
}

inline double falling_factorial(long n, int order) {
    double v = 1.0;
    for (int k = 0; k < order; ++k) v *= static_cast<double>(n - k);
    return v;
}

struct MomentEstimate {
    double time = 0.0;
    int order = 1;
    Interval value;
    std::size_t nonzero_replicas = 0;
    bool low_confidence = false;
};

/**
 * Factorial moments E[n (n-1) ... (n-l+1)] at each checkpoint. Each replica
 * contributes the average over probe sites, so the standard error is taken
 * across independent replicas. Fewer than 100 replicas with a nonzero sample
 * flags the estimate as low-confidence.
 */
inline std::vector<MomentEstimate> estimate_moments(const SimStats& stats, int max_order,
                                                    double confidence = 0.95) {
    require(stats.replicas.size() >= 2, "moment estimates need at least two replicas");
    require(!stats.config.probes.empty(), "moment estimates need probe sites");
    require(max_order >= 1, "order must be >= 1");
    std::vector<MomentEstimate> out;
    for (std::size_t j = 0; j < stats.checkpoints.size(); ++j)
        for (int l = 1; l <= max_order; ++l) {
            std::vector<double> samples;
            MomentEstimate e;
            e.time = stats.checkpoints[j];
            e.order = l;
            for (const auto& tr : stats.replicas) {
                if (j >= tr.snapshots.size()) continue;
                double s = 0.0;
                for (auto n : tr.snapshots[j].probe_counts) s += falling_factorial(n, l);
                s /= static_cast<double>(tr.snapshots[j].probe_counts.size());
                if (s != 0.0) ++e.nonzero_replicas;
                samples.push_back(s);
            }
            e.value = summarize(samples, confidence);
            e.low_confidence = e.nonzero_replicas < 100;
            out.push_back(e);
        }
    return out;
}

/// Per-checkpoint share of probe sites with n = 0, averaged per replica first.
inline std::vector<Interval> empty_probe_probability(const SimStats& stats, double confidence = 0.95) {
    require(!stats.config.probes.empty(), "needs probe sites");
    std::vector<Interval> out;
    for (std::size_t j = 0; j < stats.checkpoints.size(); ++j) {
        std::vector<double> samples;
        for (const auto& tr : stats.replicas) {
            if (j >= tr.snapshots.size()) continue;
            const auto& c = tr.snapshots[j].probe_counts;
            samples.push_back(static_cast<double>(std::count(c.begin(), c.end(), 0)) /
                              static_cast<double>(c.size()));
        }
        out.push_back(summarize(samples, confidence));
    }
    return out;
}

struct OccupancyPoint {
    double time = 0.0;
    Interval occupied_fraction;
    Interval empty_probability;  ///< P(n(t, y) = 0) over probe sites
    double mean_islands = 0.0;
    double mean_island_size = 0.0;
    double mean_max_island = 0.0;
};

/**
 * Occupied fraction of the observation window and island statistics per
 * checkpoint. The window must sit inside the initial window with a margin of
 * at least 6 sqrt(t_end).
 */
inline std::vector<OccupancyPoint> occupancy_stats(const SimStats& stats) {
    const auto& cfg = stats.config;
    require(cfg.observation >= 0, "no observation window configured");
    require(cfg.init == InitMode::window, "occupancy needs the window initial condition");
    require(cfg.observation + 6.0 * std::sqrt(cfg.t_end) <= cfg.window,
            "observation window needs a margin of 6 sqrt(t_end) inside the initial window");
    std::vector<Interval> empty;
    if (!cfg.probes.empty()) empty = empty_probe_probability(stats);
    std::vector<OccupancyPoint> out;
    for (std::size_t j = 0; j < stats.checkpoints.size(); ++j) {
        OccupancyPoint p;
        p.time = stats.checkpoints[j];
        std::vector<double> frac;
        double isl = 0, size = 0, big = 0;
        for (const auto& tr : stats.replicas) {
            if (j >= tr.snapshots.size()) continue;
            const auto& s = tr.snapshots[j];
            frac.push_back(s.occupied_fraction);
            isl += static_cast<double>(s.islands);
            size += s.mean_island;
            big += static_cast<double>(s.max_island);
        }
        p.occupied_fraction = summarize(frac);
        const double n = static_cast<double>(std::max<std::size_t>(frac.size(), 1));
        p.mean_islands = isl / n;
        p.mean_island_size = size / n;
        p.mean_max_island = big / n;
        if (!empty.empty()) p.empty_probability = empty[j];
        out.push_back(p);
    }
    return out;
}

struct Histogram {
    double time = 0.0;
    std::vector<std::size_t> counts;  ///< counts[n] = number of samples with n particles
    std::size_t samples = 0;
    std::optional<double> tv_to_double_time;  ///< TV distance to the checkpoint at 2t
    bool low_confidence = false;

    double probability(std::size_t n) const {
        return n < counts.size() && samples ? static_cast<double>(counts[n]) / samples : 0.0;
    }
};

inline double total_variation(const Histogram& a, const Histogram& b) {
    double tv = 0.0;
    const std::size_t n = std::max(a.counts.size(), b.counts.size());
    for (std::size_t k = 0; k < n; ++k) tv += std::abs(a.probability(k) - b.probability(k));
    return 0.5 * tv;
}

/**
 * Histogram of n(t, y0) across replicas at checkpoint index j, pooled over the
 * listed probe indices (all probes when empty). Fewer than 500 replicas is
 * low-confidence.
 */
inline Histogram distribution_snapshot(const SimStats& stats, std::size_t j,
                                       std::vector<std::size_t> probe_indices = {}) {
    require(j < stats.checkpoints.size(), "checkpoint index out of range");
    if (probe_indices.empty())
        for (std::size_t k = 0; k < stats.config.probes.size(); ++k) probe_indices.push_back(k);
    require(!probe_indices.empty(), "needs probe sites");
    auto build = [&](std::size_t jj) {
        Histogram h;
        h.time = stats.checkpoints[jj];
        std::size_t used = 0;
        for (const auto& tr : stats.replicas) {
            if (jj >= tr.snapshots.size()) continue;
            ++used;
            for (std::size_t k : probe_indices) {
                const auto n = static_cast<std::size_t>(tr.snapshots[jj].probe_counts.at(k));
                if (n >= h.counts.size()) h.counts.resize(n + 1, 0);
                ++h.counts[n];
                ++h.samples;
            }
        }
        h.low_confidence = used < 500;
        return h;
    };
    Histogram h = build(j);
    const double target = 2.0 * stats.checkpoints[j];
    for (std::size_t jj = j + 1; jj < stats.checkpoints.size(); ++jj)
        if (std::abs(stats.checkpoints[jj] - target) <= 1e-9 * std::max(1.0, target))
            h.tv_to_double_time = total_variation(h, build(jj));
    return h;
}

// ---------------------------------------------------------------------------
// Local time

struct LocalTimeSample {
    std::uint64_t seed = 0;
    double time = 0.0;
    std::vector<double> local_times;  ///< sojourn time at each source site
};

/**
 * Rate-1 walk from the origin; sojourn times at the source sites are
 * accumulated exactly from the exponential holding times. Returns the sample
 * at each requested time.
 */
inline std::vector<LocalTimeSample> local_time_path(const JumpKernel& kernel,
                                                    const std::vector<Site>& sites,
                                                    const std::vector<double>& times,
                                                    std::uint64_t seed) {
    require(std::is_sorted(times.begin(), times.end()), "times must increase");
    Rng rng(seed);
    JumpSampler sampler(kernel);
    Site x = origin(kernel.dim());
    std::vector<double> ell(sites.size(), 0.0);
    auto where = [&]() -> int {
        for (std::size_t k = 0; k < sites.size(); ++k)
            if (sites[k] == x) return static_cast<int>(k);
        return -1;
    };
    std::vector<LocalTimeSample> out;
    double now = 0.0;
    int here = where();
    double next_jump = rng.exponential(1.0);
    for (double t : times) {
        while (next_jump <= t) {
            if (here >= 0) ell[here] += next_jump - now;
            now = next_jump;
            const Site& z = sampler.pick(rng.uniform());
            for (int c = 0; c < kernel.dim(); ++c) x[c] += z[c];
            here = where();
            next_jump = now + rng.exponential(1.0);
        }
        if (here >= 0) ell[here] += t - now;
        now = t;
        out.push_back({seed, t, ell});
    }
    return out;
}

struct LocalTimeEstimate {
    Interval value;
    double relative_half_width = 0.0;
    bool heavy_tail_warning = false;
    double mean_local_time = 0.0;  ///< average total sojourn at the sources
};

/**
 * E_0[exp(sum_i sigma_i l_{x_i}(t))] from independent paths. A relative 95%
 * half-width above `heavy_tail_threshold` raises the heavy-tail warning.
 */
inline LocalTimeEstimate local_time_mc(const JumpKernel& kernel, const std::vector<Source>& sources,
                                       double t, std::size_t replicas, std::uint64_t seed,
                                       unsigned threads = 1, double heavy_tail_threshold = 0.05) {
    require(t >= 0.0, "t must be >= 0");
    if (replicas < 2) throw ValidationError("local-time estimate needs at least two paths");
    std::vector<Site> sites;
    for (const auto& s : sources) sites.push_back(s.site);
    struct Out {
        double value = 1.0, ell = 0.0;
    };
    const auto res = parallel_replicas<Out>(replicas, threads, [&](std::size_t r) {
        const auto sample = local_time_path(kernel, sites, {t}, replica_seed(seed, r)).back();
        double expo = 0.0, ell = 0.0;
        for (std::size_t k = 0; k < sources.size(); ++k) {
            expo += sources[k].strength * sample.local_times[k];
            ell += sample.local_times[k];
        }
        return Out{std::exp(expo), ell};
    });
    std::vector<double> v;
    v.reserve(res.size());
    double ell = 0.0;
    for (const auto& o : res) {
        v.push_back(o.value);
        ell += o.ell;
    }
    LocalTimeEstimate e;
    e.value = summarize(v);
    e.mean_local_time = ell / static_cast<double>(res.size());
    e.relative_half_width = e.value.mean > 0.0 ? (e.value.hi - e.value.mean) / e.value.mean : 0.0;
    e.heavy_tail_warning = e.relative_half_width > heavy_tail_threshold;
    return e;
}

// ---------------------------------------------------------------------------
// Goodness of fit

struct ChiSquare {
    double statistic = 0.0;
    int dof = 0;
    double p_value = 1.0;
    int bins = 0;
};

/**
 * Pearson chi-square of observed counts against expected probabilities. Cells
 * with expected count below `min_expected` are pooled into one tail cell.
 */
inline ChiSquare chi_square_test(const std::vector<double>& observed,
                                 const std::vector<double>& probabilities, double total,
                                 double min_expected = 5.0) {
    require(observed.size() == probabilities.size(), "observed and expected differ in size");
    ChiSquare c;
    double pooled_obs = 0.0, pooled_exp = 0.0;
    double covered = 0.0, counted = 0.0;
    for (std::size_t k = 0; k < observed.size(); ++k) {
        const double e = probabilities[k] * total;
        covered += probabilities[k];
        counted += observed[k];
        if (e < min_expected) {
            pooled_obs += observed[k];
            pooled_exp += e;
            continue;
        }
        c.statistic += (observed[k] - e) * (observed[k] - e) / e;
        ++c.bins;
    }
    // Mass outside the listed cells joins the tail cell.
    pooled_obs += total - counted;
    pooled_exp += std::max(0.0, 1.0 - covered) * total;
    if (pooled_exp > 0.0) {
        c.statistic += (pooled_obs - pooled_exp) * (pooled_obs - pooled_exp) / pooled_exp;
        ++c.bins;
    } else if (pooled_obs > 0.0) {
        c.statistic = std::numeric_limits<double>::infinity();
    }
    c.dof = c.bins - 1;
    if (c.dof < 1 || !std::isfinite(c.statistic)) {
        c.p_value = std::isfinite(c.statistic) ? 1.0 : 0.0;
        return c;
    }
    boost::math::chi_squared dist(c.dof);
    c.p_value = boost::math::cdf(boost::math::complement(dist, c.statistic));
    return c;
}

}  // namespace brw
