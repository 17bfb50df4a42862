#include "difform/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include "difform/analysis.hpp"
#include "difform/diffeo.hpp"
#include "difform/interp.hpp"
#include "difform/optim.hpp"
#include "difform/parallel.hpp"

namespace difform {

namespace {

double now_ms() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

LossEval eval_loss(const ScalarImage& fixed, const ScalarImage& moving,
                   const DisplacementField& phi, const RegistrationConfig& cfg) {
    switch (cfg.loss) {
        case LossKind::ssd: return ssd_eval(fixed, moving, phi);
        case LossKind::lncc: return lncc_eval(fixed, moving, phi, cfg.lncc_radius);
        case LossKind::dice: return dice_soft_eval(fixed, moving, phi);
    }
    throw std::invalid_argument("unknown loss");
}

double max_abs_step(const VectorField& d, double eta, double cap) {
    double mx = 0.0;
    for (double v : d.data)
        mx = std::max(mx, std::abs(std::clamp(eta * v, -cap, cap)));
    return mx;
}

// mean relative improvement over the trailing window; entry i is the loss
// recorded at iteration i of the current scale
bool converged(const std::vector<double>& losses, int window, double tol) {
    const size_t n = losses.size();
    if (n < static_cast<size_t>(window) + 1)
        return false;
    const double prev = losses[n - 1 - static_cast<size_t>(window)];
    const double cur = losses[n - 1];
    const double rel = ((prev - cur) / window) / std::max(std::abs(prev), 1e-30);
    return rel < tol;
}

// initial displacement (direct) or velocity (svf, first-order log approx) on
// the coarsest working grid
DisplacementField initial_field(const RegInit& init, const GridMeta& work,
                                const GridMeta& full) {
    if (std::holds_alternative<std::monostate>(init))
        return make_field(work);
    if (std::holds_alternative<AffineTransform>(init)) {
        const AffineTransform& T = std::get<AffineTransform>(init);
        std::array<double, 3> S{1.0, 1.0, 1.0};
        for (int a = 0; a < work.ndim; ++a)
            S[static_cast<size_t>(a)] =
                static_cast<double>(full.dims[a] - 1) /
                std::max<int64_t>(work.dims[a] - 1, 1);
        return affine_to_working_field(T, work, S);
    }
    const DisplacementField& u = std::get<DisplacementField>(init);
    if (u.meta.ndim != work.ndim)
        throw std::invalid_argument("register_images: init field dimensionality mismatch");
    if (u.meta.dims == work.dims)
        return u;
    if (u.meta.dims == full.dims)
        return resample_displacement(u, work);
    throw std::invalid_argument(
        "register_images: init field must live on the full or coarsest grid");
}

}  // namespace

void validate_schedule(const PyramidSchedule& s) {
    if (s.scales.empty())
        throw std::invalid_argument("schedule: at least one scale required");
    if (s.scales.size() != s.iterations.size())
        throw std::invalid_argument("schedule: scales/iterations size mismatch");
    for (size_t i = 0; i < s.scales.size(); ++i) {
        if (!(s.scales[i] >= 1.0) || !std::isfinite(s.scales[i]))
            throw std::invalid_argument("schedule: scales must be finite and >= 1");
        if (i > 0 && !(s.scales[i] < s.scales[i - 1]))
            throw std::invalid_argument("schedule: scales must be strictly decreasing");
        if (s.iterations[i] < 0)
            throw std::invalid_argument("schedule: iterations must be >= 0");
    }
}

void validate_config(const RegistrationConfig& c) {
    if (!(c.eta > 0.0) || !std::isfinite(c.eta))
        throw std::invalid_argument("config: eta must be positive and finite");
    if (c.sigma_grad < 0.0 || c.sigma_warp < 0.0)
        throw std::invalid_argument("config: sigmas must be >= 0");
    if (c.lncc_radius < 1)
        throw std::invalid_argument("config: lncc_radius must be >= 1");
    if (c.svf_M < 0)
        throw std::invalid_argument("config: svf_M must be >= 0");
    if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0))
        throw std::invalid_argument("config: betas must lie in [0, 1)");
    if (!(c.eps_adam > 0.0))
        throw std::invalid_argument("config: eps_adam must be positive");
    if (!(c.step_cap > 0.0))
        throw std::invalid_argument("config: step_cap must be positive");
    if (c.conv_window < 1)
        throw std::invalid_argument("config: conv_window must be >= 1");
    if (c.conv_tol < 0.0)
        throw std::invalid_argument("config: conv_tol must be >= 0");
    if (c.mode == RegMode::svf && c.loss == LossKind::dice)
        throw std::invalid_argument("config: dice loss is not available in svf mode");
}

std::pair<DisplacementField, RunLog> register_images(
    const ScalarImage& fixed, const ScalarImage& moving,
    const RegistrationConfig& cfg, const PyramidSchedule& sched,
    const RegInit& init) {
    validate_meta(fixed.meta);
    validate_meta(moving.meta);
    if (!fixed.meta.same_grid(moving.meta))
        throw std::invalid_argument("register_images: fixed/moving grids differ");
    validate_config(cfg);
    validate_schedule(sched);

    const double t_start = now_ms();
    RunLog log;
    // carried across scales: warp (direct) or velocity (svf) plus Adam state
    DisplacementField field;
    AdaptiveState state;
    bool have_field = false;
    int64_t global_iter = 0;

    for (size_t si = 0; si < sched.scales.size(); ++si) {
        const double scale = sched.scales[si];
        const ScalarImage f = downsample_image(fixed, scale);
        const ScalarImage mv = downsample_image(moving, scale);
        const GridMeta& wm = f.meta;

        if (!have_field) {
            field = initial_field(init, wm, fixed.meta);
            state = make_adaptive_state(wm, cfg.beta1, cfg.beta2, cfg.eps_adam);
            have_field = true;
        } else if (!(field.meta.dims == wm.dims)) {
            field = upsample_field(field, wm, UpsampleMethod::linear);
            state = upsample_state(state, wm);
        }

        std::vector<double> losses;
        losses.reserve(static_cast<size_t>(sched.iterations[si]));
        for (int it = 0; it < sched.iterations[si]; ++it) {
            const double t_it = now_ms();
            DisplacementField phi =
                cfg.mode == RegMode::direct ? field : exp_map(field, cfg.svf_M);
            const LossEval ev = eval_loss(f, mv, phi, cfg);
            if (!std::isfinite(ev.value))
                throw std::runtime_error(
                    "register_images: non-finite loss at scale " + std::to_string(scale) +
                    ", iteration " + std::to_string(it));
            losses.push_back(ev.value);

            IterationRecord rec;
            rec.scale_index = static_cast<int>(si);
            rec.scale = scale;
            rec.iter = it;
            rec.global_iter = global_iter++;
            rec.loss = ev.value;

            if (converged(losses, cfg.conv_window, cfg.conv_tol)) {
                rec.wall_ms = now_ms() - t_it;
                log.iterations.push_back(rec);
                break;
            }

            if (cfg.mode == RegMode::direct) {
                const VectorField g = cfg.sigma_grad > 0.0
                    ? gaussian_smooth_field(ev.grad, cfg.sigma_grad) : ev.grad;
                const VectorField dir =
                    adam_step(state, eulerian_direction(g, field, cfg.use_jac));
                rec.max_step = max_abs_step(dir, cfg.eta, cfg.step_cap);
                field = apply_update(field, dir, cfg.eta, cfg.sigma_warp, cfg.step_cap);
            } else {
                VectorField g = svf_pullback(field, ev.grad, cfg.svf_M);
                if (cfg.sigma_grad > 0.0)
                    g = gaussian_smooth_field(g, cfg.sigma_grad);
                parallel_for(static_cast<int64_t>(g.data.size()), [&](int64_t lo, int64_t hi) {
                    for (int64_t i = lo; i < hi; ++i)
                        g.data[static_cast<size_t>(i)] = -g.data[static_cast<size_t>(i)];
                });
                const VectorField dir = adam_step(state, g);
                rec.max_step = max_abs_step(dir, cfg.eta, cfg.step_cap);
                parallel_for(static_cast<int64_t>(field.data.size()),
                             [&](int64_t lo, int64_t hi) {
                    for (int64_t i = lo; i < hi; ++i)
                        field.data[static_cast<size_t>(i)] += std::clamp(
                            cfg.eta * dir.data[static_cast<size_t>(i)],
                            -cfg.step_cap, cfg.step_cap);
                });
                if (cfg.sigma_warp > 0.0)
                    field = gaussian_smooth_field(field, cfg.sigma_warp);
            }
            rec.wall_ms = now_ms() - t_it;
            log.iterations.push_back(rec);
        }
    }

    if (!(field.meta.dims == fixed.meta.dims))
        field = upsample_field(field, fixed.meta, UpsampleMethod::linear);
    DisplacementField phi =
        cfg.mode == RegMode::direct ? field : exp_map(field, cfg.svf_M);

    log.final_loss = eval_loss(fixed, moving, phi, cfg).value;
    log.final_singularity_fraction = singularity_fraction(phi);
    log.total_ms = now_ms() - t_start;
    if (cfg.mode == RegMode::direct && log.final_singularity_fraction > 0.0)
        throw std::runtime_error("register_images: folded warp (det J <= 0 somewhere)");
    return {phi, log};
}

SweepResult sweep(const std::vector<SweepPair>& pairs, const RegistrationConfig& base,
                  const PyramidSchedule& sched, const std::vector<double>& etas,
                  const std::vector<double>& sigma_warps, const std::vector<double>& sigma_grads,
                  SweepMetric metric, int workers) {
    if (pairs.empty())
        throw std::invalid_argument("sweep: at least one image pair required");
    if (etas.empty() || sigma_warps.empty() || sigma_grads.empty())
        throw std::invalid_argument("sweep: grid axes must be non-empty");
    if (metric == SweepMetric::overlap)
        for (const SweepPair& p : pairs)
            if (!p.fixed_labels || !p.moving_labels)
                throw std::invalid_argument("sweep: overlap metric needs label maps on every pair");

    SweepResult res;
    res.etas = etas;
    res.sigma_warps = sigma_warps;
    res.sigma_grads = sigma_grads;
    const size_t n_cfg = etas.size() * sigma_warps.size() * sigma_grads.size();
    res.rows.resize(n_cfg);

    std::atomic<size_t> next{0};
    auto run_one = [&](size_t k) {
        const size_t gi = k % sigma_grads.size();
        const size_t wi = (k / sigma_grads.size()) % sigma_warps.size();
        const size_t ei = k / (sigma_grads.size() * sigma_warps.size());
        SweepRow& row = res.rows[k];
        row.eta = etas[ei];
        row.sigma_warp = sigma_warps[wi];
        row.sigma_grad = sigma_grads[gi];
        RegistrationConfig cfg = base;
        cfg.eta = row.eta;
        cfg.sigma_warp = row.sigma_warp;
        cfg.sigma_grad = row.sigma_grad;
        cfg.seed = base.seed + static_cast<uint64_t>(k);
        const double t0 = now_ms();
        try {
            double sum = 0.0, sum2 = 0.0;
            for (const SweepPair& p : pairs) {
                auto [phi, rlog] = register_images(p.fixed, p.moving, cfg, sched);
                double m;
                if (metric == SweepMetric::loss) {
                    m = rlog.final_loss;
                } else {
                    const LabelImage warped = warp_labels(*p.moving_labels, phi);
                    m = overlap_report(warped, *p.fixed_labels).to_mean;
                }
                sum += m;
                sum2 += m * m;
            }
            const double n = static_cast<double>(pairs.size());
            row.metric_mean = sum / n;
            row.metric_sd = std::sqrt(std::max(sum2 / n - row.metric_mean * row.metric_mean, 0.0));
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
            row.metric_mean = std::numeric_limits<double>::quiet_NaN();
            row.metric_sd = std::numeric_limits<double>::quiet_NaN();
        }
        row.wall_ms = now_ms() - t0;
    };

    const int n_workers = std::max(1, std::min<int>(workers, static_cast<int>(n_cfg)));
    if (n_workers == 1) {
        for (size_t k = 0; k < n_cfg; ++k)
            run_one(k);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(n_workers));
        for (int w = 0; w < n_workers; ++w)
            pool.emplace_back([&] {
                for (size_t k = next.fetch_add(1); k < n_cfg; k = next.fetch_add(1))
                    run_one(k);
            });
        for (std::thread& th : pool)
            th.join();
    }

    res.heatmaps.assign(etas.size(),
        std::vector<std::vector<double>>(sigma_warps.size(),
            std::vector<double>(sigma_grads.size(), 0.0)));
    for (size_t k = 0; k < n_cfg; ++k) {
        const size_t gi = k % sigma_grads.size();
        const size_t wi = (k / sigma_grads.size()) % sigma_warps.size();
        const size_t ei = k / (sigma_grads.size() * sigma_warps.size());
        res.heatmaps[ei][wi][gi] = res.rows[k].metric_mean;
    }
    return res;
}

}  // namespace difform
