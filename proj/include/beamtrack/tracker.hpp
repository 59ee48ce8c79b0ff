#ifndef BEAMTRACK_TRACKER_HPP
#define BEAMTRACK_TRACKER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "beamtrack/common.hpp"
#include "beamtrack/localization.hpp"
#include "beamtrack/random.hpp"

namespace beamtrack {

struct TrackerConfig {
    std::size_t num_particles = 500;
    double damping_rate = 2.0;           // velocity damping, 1/s
    double excitation = 0.04;            // stationary velocity stddev, m/s
    double delta_t = 2048.0 / 48000.0;   // seconds per tracker update
    double energy_threshold = 0.6;       // beamformer energy giving 50% confidence
    double sigma_dir = deg_to_rad(3.0);  // observation direction stddev, radians
    double sigma_dist_rel = 0.15;        // observation distance stddev, relative
    double p_new = 0.02;                 // a priori new-source probability
    double p_false = 0.05;               // a priori false-detection probability
    double n_min = 500.0 / 3.0;          // resample when N_eff drops below this
    double birth_threshold = 0.3;
    double death_timeout_s = 2.0;
    double markov_stay_active = 0.95;
    double markov_become_active = 0.05;
    double existence_keep_prior = 0.9; // per-frame existence retention when unobserved
    double report_existence = 0.5;     // emit estimates above this existence
    double dist_min = 0.3;             // search shell, for the uniform densities
    double dist_max = 3.0;

    /// Uniform density of false detections and new sources over the search
    /// volume (upper hemisphere of directions x distance shell), per
    /// steradian-meter. Makes them commensurable with the particle-cloud
    /// likelihoods, which are densities over the same space.
    double uniform_density() const { return 1.0 / (2.0 * kPi * (dist_max - dist_min)); }

    void validate() const {
        if (num_particles < 1) throw ConfigError("tracker: num_particles must be >= 1");
        if (delta_t <= 0.0) throw ConfigError("tracker: delta_t must be positive");
        if (energy_threshold <= 0.0) throw ConfigError("tracker: energy_threshold must be > 0");
        if (sigma_dir <= 0.0 || sigma_dist_rel <= 0.0)
            throw ConfigError("tracker: observation noise must be positive");
        if (n_min >= static_cast<double>(num_particles))
            throw ConfigError("tracker: n_min must be below num_particles");
        for (double p : {p_new, p_false, birth_threshold, markov_stay_active,
                         markov_become_active, existence_keep_prior, report_existence})
            if (p < 0.0 || p > 1.0) throw ConfigError("tracker: probability out of [0, 1]");
        if (dist_min <= 0.0 || dist_max <= dist_min)
            throw ConfigError("tracker: need 0 < dist_min < dist_max");
    }
};

struct Particle {
    Vec3 position; // meters
    Vec3 velocity; // m/s
    double weight = 0.0;
};

struct TrackedSource {
    std::uint64_t id = 0;
    std::vector<Particle> particles;
    double existence_prob = 0.0;
    double activity_prob = 0.5; // posterior; active/inactive a priori equiprobable
    std::uint64_t frames_unobserved = 0;
    std::uint64_t degenerate_updates = 0; // numerically degenerate weight updates skipped
    Rng rng;                              // per-source stream, keeps runs reproducible
};

/// One-step Markov prediction of the activity state: P(A^t | O^(t-1)).
inline double predicted_activity(const TrackedSource& s, const TrackerConfig& cfg) {
    return cfg.markov_stay_active * s.activity_prob +
           cfg.markov_become_active * (1.0 - s.activity_prob);
}

/// Prior that the source produces an observation now: it exists and is
/// predicted active. Using the prediction rather than the last posterior
/// keeps silence from becoming absorbing (the become-active transition floors
/// the prediction).
inline double observable_prior(const TrackedSource& s, const TrackerConfig& cfg) {
    return s.existence_prob * predicted_activity(s, cfg);
}

/// Per-observation assignment posterior: each observation is explained by a
/// tracked source, a false detection, or a new source; the three masses sum
/// to one per observation.
struct AssignmentPosterior {
    std::vector<std::vector<double>> source_given_obs; // [q][j]
    std::vector<double> false_alarm;                   // [q]
    std::vector<double> new_source;                    // [q]
};

struct SourceEstimate {
    std::uint64_t id = 0;
    Vec3 position; // weighted particle mean, meters
    double t_seconds = 0.0;
    double existence = 0.0;
};

/// Excitation-damping prediction: v <- a*v + b*N(0,I), x <- x + dt*v with
/// a = exp(-alpha*dt) and b = beta*sqrt(1-a^2), so beta is the stationary
/// velocity standard deviation.
inline void predict(TrackedSource& source, const TrackerConfig& cfg) {
    const double a = std::exp(-cfg.damping_rate * cfg.delta_t);
    const double b = cfg.excitation * std::sqrt(std::max(0.0, 1.0 - a * a));
    for (Particle& p : source.particles) {
        p.velocity = a * p.velocity + b * source.rng.gaussian3();
        p.position += cfg.delta_t * p.velocity;
    }
}

/// Confidence that a beamformer observation with this energy is a real
/// source: quadratic below the threshold energy, saturating above it, with
/// 50% exactly at E = E_T.
inline double observation_confidence(double energy, const TrackerConfig& cfg) {
    double nu = energy / cfg.energy_threshold;
    if (nu < 0.0) nu = 0.0;
    if (nu <= 1.0) return nu * nu / 2.0;
    return 1.0 - 1.0 / (2.0 * nu * nu);
}

/// Density of observing O_q given a source at `position`: normal in the
/// angle between the observed and particle directions (per solid angle) times
/// normal in distance with a distance-proportional stddev. A particle at the
/// array center has no direction and gets density zero.
inline double observation_likelihood(const Observation& obs, const Vec3& position,
                                     const TrackerConfig& cfg) {
    const double r = position.norm();
    if (r < 1e-12) return 0.0;
    const double theta = angle_between(obs.direction, position);
    const double s2 = cfg.sigma_dir * cfg.sigma_dir;
    const double angular = std::exp(-theta * theta / (2.0 * s2)) / (2.0 * kPi * s2);
    const double sd = cfg.sigma_dist_rel * obs.distance;
    const double dd = r - obs.distance;
    const double radial =
        std::exp(-dd * dd / (2.0 * sd * sd)) / (std::sqrt(2.0 * kPi) * sd);
    return angular * radial;
}

/// Particle-cloud likelihood of an observation for one source (the cloud pdf
/// convolved with the beamformer error pdf).
inline double source_likelihood(const Observation& obs, const TrackedSource& source,
                                const TrackerConfig& cfg) {
    double sum = 0.0;
    for (const Particle& p : source.particles)
        sum += p.weight * observation_likelihood(obs, p.position, cfg);
    return sum;
}

/// Posterior assignment of each observation to {tracked sources, false
/// detection, new source}. The prior over assignment functions and the
/// likelihoods both factor per observation, so the joint posterior marginals
/// reduce to independent per-observation normalizations; the exhaustive
/// enumeration over all (N_s+2)^Q assignment functions gives the same
/// marginals.
inline AssignmentPosterior assignment_probabilities(const std::vector<Observation>& obs,
                                                    const std::vector<double>& confidence,
                                                    const std::vector<TrackedSource>& sources,
                                                    const TrackerConfig& cfg) {
    const std::size_t q_count = obs.size();
    const std::size_t n_s = sources.size();
    const double uniform = cfg.uniform_density();

    AssignmentPosterior post;
    post.source_given_obs.assign(q_count, std::vector<double>(n_s, 0.0));
    post.false_alarm.assign(q_count, 0.0);
    post.new_source.assign(q_count, 0.0);

    for (std::size_t q = 0; q < q_count; ++q) {
        const double pq = confidence[q];
        double w_false = (1.0 - pq) * cfg.p_false * uniform;
        double w_new = pq * cfg.p_new * uniform;
        double total = w_false + w_new;
        for (std::size_t j = 0; j < n_s; ++j) {
            double w = pq * observable_prior(sources[j], cfg) *
                       source_likelihood(obs[q], sources[j], cfg);
            post.source_given_obs[q][j] = w;
            total += w;
        }
        if (total <= 0.0) {
            post.false_alarm[q] = 1.0;
            continue;
        }
        post.false_alarm[q] = w_false / total;
        post.new_source[q] = w_new / total;
        for (std::size_t j = 0; j < n_s; ++j) post.source_given_obs[q][j] /= total;
    }
    return post;
}

/// Total probability that source j was observed this frame. Observations are
/// assigned independently, so the sum can exceed one when several
/// observations land on the same source; clamp to keep it a probability.
inline double observed_probability(const AssignmentPosterior& assign, std::size_t j) {
    double p = 0.0;
    for (const auto& row : assign.source_given_obs) p += row[j];
    return std::min(p, 1.0);
}

/// SIR weight update. Each particle's posterior mixes a uniform floor for the
/// unobserved case with the normalized observation-induced distribution, then
/// multiplies the prior weights and renormalizes.
inline void update_weights(TrackedSource& source, const std::vector<Observation>& obs,
                           const AssignmentPosterior& assign, std::size_t j,
                           const TrackerConfig& cfg) {
    const double p_j = observed_probability(assign, j);
    if (p_j <= 0.0) return; // uniform posterior, weights unchanged

    const std::size_t n = source.particles.size();
    std::vector<double> induced(n, 0.0);
    double induced_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double v = 0.0;
        for (std::size_t q = 0; q < obs.size(); ++q)
            v += assign.source_given_obs[q][j] *
                 observation_likelihood(obs[q], source.particles[i].position, cfg);
        induced[i] = v;
        induced_sum += v;
    }
    if (!(induced_sum > 0.0) || !std::isfinite(induced_sum)) {
        ++source.degenerate_updates; // all particles see zero density
        return;
    }

    double new_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double p_x = (1.0 - p_j) / static_cast<double>(n) + p_j * induced[i] / induced_sum;
        source.particles[i].weight *= p_x;
        new_sum += source.particles[i].weight;
    }
    if (!(new_sum > 0.0) || !std::isfinite(new_sum)) {
        ++source.degenerate_updates;
        double uniform = 1.0 / static_cast<double>(n);
        for (Particle& p : source.particles) p.weight = uniform;
        return;
    }
    for (Particle& p : source.particles) p.weight /= new_sum;
}

/// Activity (two-state Markov propagation plus a Bayes step with the observed
/// probability as evidence), existence retention, and the unobserved-frame
/// counter used for source death.
inline void update_observability(TrackedSource& source, double p_j, const TrackerConfig& cfg) {
    double prior = predicted_activity(source, cfg);
    double den = p_j * prior + (1.0 - p_j) * (1.0 - prior);
    source.activity_prob = den > 0.0 ? p_j * prior / den : prior;

    source.existence_prob =
        p_j + (1.0 - p_j) * cfg.existence_keep_prior * source.existence_prob;
    source.existence_prob = std::clamp(source.existence_prob, 0.0, 1.0);

    if (p_j < 0.5)
        ++source.frames_unobserved;
    else
        source.frames_unobserved = 0;
}

namespace detail {

/// Orthonormal tangent basis for jittering directions around a unit vector.
inline void tangent_basis(const Vec3& d, Vec3& t1, Vec3& t2) {
    Vec3 h = std::abs(d.z) < 0.9 ? Vec3{0.0, 0.0, 1.0} : Vec3{1.0, 0.0, 0.0};
    t1 = {d.y * h.z - d.z * h.y, d.z * h.x - d.x * h.z, d.x * h.y - d.y * h.x};
    double n = t1.norm();
    t1 = t1 * (1.0 / n);
    t2 = {d.y * t1.z - d.z * t1.y, d.z * t1.x - d.x * t1.z, d.x * t1.y - d.y * t1.x};
}

} // namespace detail

/// New source initialized on an observation, with the particle cloud spread
/// over the observation uncertainty and velocities drawn at the stationary
/// excitation scale.
inline TrackedSource spawn_source(const Observation& obs, std::uint64_t id, double existence,
                                  const TrackerConfig& cfg, std::uint64_t master_seed) {
    TrackedSource s;
    s.id = id;
    s.rng = Rng(split_seed(master_seed, id));
    s.existence_prob = existence;
    s.activity_prob = 0.5;
    s.particles.resize(cfg.num_particles);
    Vec3 t1, t2;
    detail::tangent_basis(obs.direction, t1, t2);
    const double w0 = 1.0 / static_cast<double>(cfg.num_particles);
    for (Particle& p : s.particles) {
        Vec3 dir = obs.direction + cfg.sigma_dir * (s.rng.gaussian() * t1 + s.rng.gaussian() * t2);
        double dn = dir.norm();
        dir = dir * (1.0 / dn);
        double dist = obs.distance * (1.0 + cfg.sigma_dist_rel * s.rng.gaussian());
        if (dist < 0.05) dist = 0.05;
        p.position = dir * dist;
        p.velocity = cfg.excitation * s.rng.gaussian3();
        p.weight = w0;
    }
    return s;
}

/// Births (new-source posterior above the threshold) and deaths (unobserved
/// beyond the timeout). Removed sources are dropped entirely.
///
/// Births are processed observation by observation: once one observation has
/// spawned a source, the new-source posterior of the remaining observations
/// is recomputed against the grown source list, so two detections of the same
/// physical source in one frame cannot both spawn.
inline void manage_sources(std::vector<TrackedSource>& sources,
                           const std::vector<Observation>& obs,
                           const std::vector<double>& confidence,
                           const AssignmentPosterior& assign, const TrackerConfig& cfg,
                           std::uint64_t& next_id, std::uint64_t master_seed) {
    bool born_this_frame = false;
    for (std::size_t q = 0; q < obs.size(); ++q) {
        double p_new = assign.new_source[q];
        if (born_this_frame) {
            AssignmentPosterior fresh = assignment_probabilities(
                {obs[q]}, {confidence[q]}, sources, cfg);
            p_new = fresh.new_source[0];
        }
        if (p_new > cfg.birth_threshold) {
            sources.push_back(spawn_source(obs[q], next_id++, p_new, cfg, master_seed));
            born_this_frame = true;
        }
    }

    const double timeout_frames = cfg.death_timeout_s / cfg.delta_t;
    sources.erase(std::remove_if(sources.begin(), sources.end(),
                                 [&](const TrackedSource& s) {
                                     return static_cast<double>(s.frames_unobserved) >
                                            timeout_frames;
                                 }),
                  sources.end());
}

/// Weighted mean of the particle positions.
inline SourceEstimate estimate(const TrackedSource& source) {
    SourceEstimate e;
    e.id = source.id;
    e.existence = source.existence_prob;
    for (const Particle& p : source.particles) e.position += p.weight * p.position;
    return e;
}

inline double effective_sample_size(const TrackedSource& source) {
    double s2 = 0.0;
    for (const Particle& p : source.particles) s2 += p.weight * p.weight;
    return s2 > 0.0 ? 1.0 / s2 : 0.0;
}

/// Systematic resampling, run only when the effective sample size drops below
/// n_min; resampling on every frame would needlessly erode particle
/// diversity.
inline void resample_if_needed(TrackedSource& source, const TrackerConfig& cfg) {
    if (effective_sample_size(source) >= cfg.n_min) return;
    const std::size_t n = source.particles.size();
    std::vector<Particle> out;
    out.reserve(n);
    const double step = 1.0 / static_cast<double>(n);
    double u = source.rng.uniform() * step;
    double cum = source.particles[0].weight;
    std::size_t i = 0;
    for (std::size_t k = 0; k < n; ++k) {
        double target = u + static_cast<double>(k) * step;
        while (cum < target && i + 1 < n) cum += source.particles[++i].weight;
        Particle p = source.particles[i];
        p.weight = step;
        out.push_back(p);
    }
    source.particles = std::move(out);
}

/// Full multi-source tracker. One step ingests a beamformer output frame and
/// emits position estimates for sources whose existence is established.
class MultiSourceTracker {
public:
    explicit MultiSourceTracker(const TrackerConfig& cfg, std::uint64_t seed = 0)
        : cfg_(cfg), master_seed_(seed) {
        cfg.validate();
    }

    std::vector<SourceEstimate> step(const BeamformerOutput& frame) {
        for (TrackedSource& s : sources_) predict(s, cfg_);

        std::vector<double> confidence(frame.observations.size());
        for (std::size_t q = 0; q < frame.observations.size(); ++q)
            confidence[q] = observation_confidence(frame.observations[q].energy, cfg_);

        AssignmentPosterior assign =
            assignment_probabilities(frame.observations, confidence, sources_, cfg_);

        for (std::size_t j = 0; j < sources_.size(); ++j) {
            update_weights(sources_[j], frame.observations, assign, j, cfg_);
            update_observability(sources_[j], observed_probability(assign, j), cfg_);
        }

        manage_sources(sources_, frame.observations, confidence, assign, cfg_, next_id_,
                       master_seed_);

        std::vector<SourceEstimate> estimates;
        for (const TrackedSource& s : sources_)
            if (s.existence_prob > cfg_.report_existence) {
                SourceEstimate e = estimate(s);
                e.t_seconds = frame.t_seconds;
                estimates.push_back(e);
            }

        for (TrackedSource& s : sources_) resample_if_needed(s, cfg_);
        return estimates;
    }

    const std::vector<TrackedSource>& sources() const { return sources_; }
    const TrackerConfig& config() const { return cfg_; }

private:
    TrackerConfig cfg_;
    std::uint64_t master_seed_;
    std::uint64_t next_id_ = 1;
    std::vector<TrackedSource> sources_;
};

} // namespace beamtrack

#endif // BEAMTRACK_TRACKER_HPP
