#include "difform/similarity.hpp"

#include <cmath>
#include <stdexcept>

#include "difform/interp.hpp"
#include "difform/parallel.hpp"

namespace difform {

namespace {

constexpr double kVarFloor = 1e-5;
constexpr double kDiceEps = 1e-7;

void check_loss_inputs(const ScalarImage& fixed, const ScalarImage& moving,
                       const DisplacementField& phi, const char* what) {
    if (!fixed.meta.same_grid(phi.meta))
        throw std::invalid_argument(std::string(what) + ": fixed/phi grid mismatch");
    if (fixed.meta.ndim != moving.meta.ndim)
        throw std::invalid_argument(std::string(what) + ": dimensionality mismatch");
}

// warped values and interpolant gradients of the moving image at x + u(x)
void warp_with_gradient(const ScalarImage& moving, const DisplacementField& phi,
                        ScalarImage& values, VectorField& grads) {
    const GridMeta& m = phi.meta;
    values = make_image(m);
    grads = make_field(m);
    parallel_for(m.voxel_count(), [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            const int64_t x = i % m.dims[0];
            const int64_t y = (i / m.dims[0]) % m.dims[1];
            const int64_t z = i / (m.dims[0] * m.dims[1]);
            std::array<double, 3> p{static_cast<double>(x), static_cast<double>(y),
                                    static_cast<double>(z)};
            for (int c = 0; c < m.ndim; ++c)
                p[c] += phi.data[static_cast<size_t>(i * m.ndim + c)];
            values.data[static_cast<size_t>(i)] = sample_linear(moving, p);
            const std::array<double, 3> g = sample_linear_gradient(moving, p);
            for (int c = 0; c < m.ndim; ++c)
                grads.data[static_cast<size_t>(i * m.ndim + c)] = g[c];
        }
    });
}

// raw sliding box sum over [i-r, i+r] clipped to the axis range
void box_sum_axis(std::vector<double>& data, const GridMeta& m, int axis, int r) {
    const int64_t n = m.dims[axis];
    int64_t stride = 1;
    for (int a = 0; a < axis; ++a)
        stride *= m.dims[a];
    const int64_t lines = m.voxel_count() / n;
    std::vector<double> out(data.size());
    parallel_for(lines, [&](int64_t lo, int64_t hi) {
        for (int64_t line = lo; line < hi; ++line) {
            const int64_t block = line / stride;
            const int64_t off = line % stride;
            const int64_t start = block * stride * n + off;
            for (int64_t i = 0; i < n; ++i) {
                const int64_t jlo = std::max<int64_t>(0, i - r);
                const int64_t jhi = std::min<int64_t>(n - 1, i + r);
                double acc = 0.0;
                for (int64_t j = jlo; j <= jhi; ++j)
                    acc += data[static_cast<size_t>(start + j * stride)];
                out[static_cast<size_t>(start + i * stride)] = acc;
            }
        }
    });
    data.swap(out);
}

std::vector<double> box_sum(std::vector<double> v, const GridMeta& m, int r) {
    for (int a = 0; a < m.ndim; ++a)
        box_sum_axis(v, m, a, r);
    return v;
}

}  // namespace

LossEval ssd_eval(const ScalarImage& fixed, const ScalarImage& moving,
                  const DisplacementField& phi) {
    check_loss_inputs(fixed, moving, phi, "ssd_eval");
    ScalarImage W;
    VectorField G;
    warp_with_gradient(moving, phi, W, G);
    const GridMeta& m = fixed.meta;
    const int64_t N = m.voxel_count();
    LossEval out;
    out.grad = make_field(m);
    out.value = parallel_sum(N, [&](int64_t i) {
        const double r = fixed.data[static_cast<size_t>(i)] - W.data[static_cast<size_t>(i)];
        return r * r;
    }) / static_cast<double>(N);
    parallel_for(N, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            const double r = W.data[static_cast<size_t>(i)] - fixed.data[static_cast<size_t>(i)];
            for (int c = 0; c < m.ndim; ++c)
                out.grad.data[static_cast<size_t>(i * m.ndim + c)] =
                    r * G.data[static_cast<size_t>(i * m.ndim + c)] / static_cast<double>(N);
        }
    });
    return out;
}

LossEval lncc_eval(const ScalarImage& fixed, const ScalarImage& moving,
                   const DisplacementField& phi, int window_radius) {
    check_loss_inputs(fixed, moving, phi, "lncc_eval");
    if (window_radius < 1)
        throw std::invalid_argument("lncc_eval: window_radius must be >= 1");
    const GridMeta& m = fixed.meta;
    for (int a = 0; a < m.ndim; ++a)
        if (2 * window_radius + 1 > m.dims[a])
            throw std::invalid_argument("lncc_eval: window larger than image");

    ScalarImage W;
    VectorField G;
    warp_with_gradient(moving, phi, W, G);
    const int64_t N = m.voxel_count();
    const size_t Ns = static_cast<size_t>(N);

    // box-filtered moments over the clipped windows
    std::vector<double> ones(Ns, 1.0), f2(Ns), w2(Ns), fw(Ns);
    for (size_t i = 0; i < Ns; ++i) {
        f2[i] = fixed.data[i] * fixed.data[i];
        w2[i] = W.data[i] * W.data[i];
        fw[i] = fixed.data[i] * W.data[i];
    }
    const std::vector<double> cnt = box_sum(std::move(ones), m, window_radius);
    const std::vector<double> sF = box_sum(fixed.data, m, window_radius);
    const std::vector<double> sW = box_sum(W.data, m, window_radius);
    const std::vector<double> sFF = box_sum(std::move(f2), m, window_radius);
    const std::vector<double> sWW = box_sum(std::move(w2), m, window_radius);
    const std::vector<double> sFW = box_sum(std::move(fw), m, window_radius);

    // per-window CC^2 plus the coefficient images whose box sums make up the
    // derivative: with alpha = cv/(vF*vW) and beta = cv^2/(vF*vW^2),
    // d value/dW_k = -(2/N)[F_k BS(alpha/n) - BS(alpha*muF/n)
    //                        - W_k BS(beta/n) + BS(beta*muW/n)]
    std::vector<double> a_n(Ns), a_mu(Ns), b_n(Ns), b_mu(Ns);
    std::vector<double> cc2(Ns);
    parallel_for(N, [&](int64_t lo, int64_t hi) {
        for (int64_t ii = lo; ii < hi; ++ii) {
            const size_t i = static_cast<size_t>(ii);
            const double n = cnt[i];
            const double muF = sF[i] / n;
            const double muW = sW[i] / n;
            const double vF = std::max(0.0, sFF[i] / n - muF * muF);
            const double vW = std::max(0.0, sWW[i] / n - muW * muW);
            const double cv = sFW[i] / n - muF * muW;
            if (vF < kVarFloor || vW < kVarFloor) {
                cc2[i] = a_n[i] = a_mu[i] = b_n[i] = b_mu[i] = 0.0;
                continue;
            }
            const double cc = cv / std::sqrt(vF * vW);
            cc2[i] = cc * cc;
            const double alpha = cv / (vF * vW);
            const double beta = cv * cv / (vF * vW * vW);
            a_n[i] = alpha / n;
            a_mu[i] = alpha * muF / n;
            b_n[i] = beta / n;
            b_mu[i] = beta * muW / n;
        }
    });

    LossEval out;
    out.value = -parallel_sum(N, [&](int64_t i) { return cc2[static_cast<size_t>(i)]; }) /
                static_cast<double>(N);

    // each voxel k collects the windows containing it: a second box pass over
    // the coefficient images (window adjacency is symmetric under clipping)
    const std::vector<double> bs_an = box_sum(std::move(a_n), m, window_radius);
    const std::vector<double> bs_amu = box_sum(std::move(a_mu), m, window_radius);
    const std::vector<double> bs_bn = box_sum(std::move(b_n), m, window_radius);
    const std::vector<double> bs_bmu = box_sum(std::move(b_mu), m, window_radius);

    out.grad = make_field(m);
    parallel_for(N, [&](int64_t lo, int64_t hi) {
        for (int64_t ii = lo; ii < hi; ++ii) {
            const size_t i = static_cast<size_t>(ii);
            const double dW =
                -2.0 / static_cast<double>(N) *
                (fixed.data[i] * bs_an[i] - bs_amu[i] - W.data[i] * bs_bn[i] + bs_bmu[i]);
            for (int c = 0; c < m.ndim; ++c)
                out.grad.data[i * static_cast<size_t>(m.ndim) + static_cast<size_t>(c)] =
                    dW * G.data[i * static_cast<size_t>(m.ndim) + static_cast<size_t>(c)];
        }
    });
    return out;
}

LossEval dice_soft_eval(const ScalarImage& fixed_mask, const ScalarImage& moving_mask,
                        const DisplacementField& phi) {
    check_loss_inputs(fixed_mask, moving_mask, phi, "dice_soft_eval");
    for (double v : fixed_mask.data)
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("dice_soft_eval: fixed mask values outside [0,1]");
    for (double v : moving_mask.data)
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("dice_soft_eval: moving mask values outside [0,1]");

    ScalarImage W;
    VectorField G;
    warp_with_gradient(moving_mask, phi, W, G);
    const GridMeta& m = fixed_mask.meta;
    const int64_t N = m.voxel_count();
    const double P = parallel_sum(N, [&](int64_t i) {
        return fixed_mask.data[static_cast<size_t>(i)] * W.data[static_cast<size_t>(i)];
    });
    const double SF = parallel_sum(N, [&](int64_t i) {
        return fixed_mask.data[static_cast<size_t>(i)];
    });
    const double SM = parallel_sum(N, [&](int64_t i) {
        return W.data[static_cast<size_t>(i)];
    });
    const double D = SF + SM + kDiceEps;

    LossEval out;
    out.value = 1.0 - 2.0 * P / D;
    out.grad = make_field(m);
    parallel_for(N, [&](int64_t lo, int64_t hi) {
        for (int64_t ii = lo; ii < hi; ++ii) {
            const size_t i = static_cast<size_t>(ii);
            const double dW = -2.0 * fixed_mask.data[i] / D + 2.0 * P / (D * D);
            for (int c = 0; c < m.ndim; ++c)
                out.grad.data[i * static_cast<size_t>(m.ndim) + static_cast<size_t>(c)] =
                    dW * G.data[i * static_cast<size_t>(m.ndim) + static_cast<size_t>(c)];
        }
    });
    return out;
}

}  // namespace difform
