#pragma once

// Layer primitives: convolution, fully connected, sum pooling and the
// integrate-and-fire update. Activations are dense [c][y][x] arrays.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <tripwire/error.hpp>
#include <tripwire/snn/network.hpp>

namespace tripwire::snn {

// Cross-correlation with zero padding and no bias.
template <typename Real>
std::vector<Real> conv2d(std::span<const Real> input, shape3 in, const basic_layer_spec<Real>& l) {
    if (l.kind != layer_kind::conv || l.in_channels != in.c || input.size() != in.size()
        || l.weights.size() != l.weight_count())
    {
        throw config_error("conv2d: shape mismatch");
    }
    const int oh = detail::conv_out_dim(in.h, l.kernel_h, l.stride, l.padding);
    const int ow = detail::conv_out_dim(in.w, l.kernel_w, l.stride, l.padding);
    if (oh <= 0 || ow <= 0) throw config_error("conv2d: kernel larger than padded input");

    std::vector<Real> out(std::size_t(l.out_channels)*oh*ow, Real(0));
    for (int oc = 0; oc < l.out_channels; ++oc) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                Real acc = 0;
                for (int ic = 0; ic < in.c; ++ic) {
                    for (int ky = 0; ky < l.kernel_h; ++ky) {
                        const int iy = oy*l.stride - l.padding + ky;
                        if (iy < 0 || iy >= in.h) continue;
                        for (int kx = 0; kx < l.kernel_w; ++kx) {
                            const int ix = ox*l.stride - l.padding + kx;
                            if (ix < 0 || ix >= in.w) continue;
                            acc += l.weights[((std::size_t(oc)*in.c + ic)*l.kernel_h + ky)*l.kernel_w + kx]
                                 * input[(std::size_t(ic)*in.h + iy)*in.w + ix];
                        }
                    }
                }
                out[(std::size_t(oc)*oh + oy)*ow + ox] = acc;
            }
        }
    }
    return out;
}

template <typename Real>
std::vector<Real> fully_connected(std::span<const Real> input, const basic_layer_spec<Real>& l) {
    if (l.kind != layer_kind::fc || input.size() != std::size_t(l.in_channels)
        || l.weights.size() != l.weight_count())
    {
        throw config_error("fully_connected: shape mismatch");
    }
    std::vector<Real> out(l.out_channels, Real(0));
    for (int o = 0; o < l.out_channels; ++o) {
        const Real* w = l.weights.data() + std::size_t(o)*l.in_channels;
        Real acc = 0;
        for (int i = 0; i < l.in_channels; ++i) acc += w[i]*input[i];
        out[o] = acc;
    }
    return out;
}

// Each output element is the sum of its factor x factor block.
template <typename Real>
std::vector<Real> sum_pool(std::span<const Real> input, shape3 in, int factor) {
    if (factor < 1 || in.h % factor || in.w % factor || input.size() != in.size()) {
        throw config_error("sum_pool: factor " + std::to_string(factor) + " does not divide " +
            std::to_string(in.h) + "x" + std::to_string(in.w));
    }
    if (factor == 1) return {input.begin(), input.end()};
    const int oh = in.h/factor, ow = in.w/factor;
    std::vector<Real> out(std::size_t(in.c)*oh*ow, Real(0));
    for (int c = 0; c < in.c; ++c) {
        for (int y = 0; y < in.h; ++y) {
            const Real* src = input.data() + (std::size_t(c)*in.h + y)*in.w;
            Real* dst = out.data() + (std::size_t(c)*oh + y/factor)*ow;
            for (int x = 0; x < in.w; ++x) dst[x/factor] += src[x];
        }
    }
    return out;
}

// Membrane potentials of one layer. clamp_min bounds the membrane from below.
template <typename Real>
struct if_state {
    std::vector<Real> membrane;
    Real clamp_min = -1;
};

// One MultiSpike integrate-and-fire update of a single neuron:
//   v <- max(clamp_min, v + drive); n = floor(v/theta) if v >= theta else 0;
//   v <- v - n*theta.
// Afterwards clamp_min <= v < theta. Returns n.
template <typename Real>
Real if_update(Real& v, Real drive, Real theta, Real clamp_min) {
    Real u = v + drive;
    if (!(u > clamp_min)) u = clamp_min;
    Real n = 0;
    if (u >= theta) {
        n = std::floor(u/theta);
        u -= n*theta;
        // Guard against rounding in the division.
        while (u >= theta) { u -= theta; n += 1; }
        if (u < 0 && n > 0) { u += theta; n -= 1; }
    }
    v = u;
    return n;
}

template <typename Real>
std::vector<std::int64_t> if_step(if_state<Real>& state, std::span<const Real> drive, Real theta) {
    if (!(theta > 0)) throw config_error("if_step: threshold must be positive");
    if (drive.size() != state.membrane.size()) throw config_error("if_step: size mismatch");
    std::vector<std::int64_t> spikes(drive.size());
    for (std::size_t i = 0; i < drive.size(); ++i) {
        if (!std::isfinite(drive[i])) throw numeric_error("if_step: non-finite drive");
        spikes[i] = std::int64_t(if_update(state.membrane[i], drive[i], theta, state.clamp_min));
    }
    return spikes;
}

// Synaptic fan-out of every input element of a layer: how many weights one
// spike at that position multiplies. Border positions of padded convolutions
// reach fewer kernel placements.
template <typename Real>
std::vector<std::uint32_t> fanout(const basic_layer_spec<Real>& l, const layer_geometry& g) {
    if (l.kind == layer_kind::fc) {
        return std::vector<std::uint32_t>(g.in.size(), std::uint32_t(l.out_channels));
    }
    std::vector<std::uint32_t> plane(std::size_t(g.in.h)*g.in.w, 0);
    for (int oy = 0; oy < g.out.h; ++oy) {
        for (int ox = 0; ox < g.out.w; ++ox) {
            for (int ky = 0; ky < l.kernel_h; ++ky) {
                const int iy = oy*l.stride - l.padding + ky;
                if (iy < 0 || iy >= g.in.h) continue;
                for (int kx = 0; kx < l.kernel_w; ++kx) {
                    const int ix = ox*l.stride - l.padding + kx;
                    if (ix < 0 || ix >= g.in.w) continue;
                    ++plane[std::size_t(iy)*g.in.w + ix];
                }
            }
        }
    }
    std::vector<std::uint32_t> out(g.in.size());
    for (int c = 0; c < g.in.c; ++c) {
        for (std::size_t i = 0; i < plane.size(); ++i) {
            out[c*plane.size() + i] = plane[i]*std::uint32_t(l.out_channels);
        }
    }
    return out;
}

namespace detail {

// z += W x, visiting only the non-zero inputs listed in nz.
template <typename Real>
void scatter_forward(const basic_layer_spec<Real>& l, const layer_geometry& g, std::span<const Real> x,
                     std::span<const std::uint32_t> nz, std::span<Real> z)
{
    if (l.kind == layer_kind::fc) {
        const std::size_t in = l.in_channels;
        for (auto i: nz) {
            const Real a = x[i];
            const Real* w = l.weights.data() + i;
            for (int o = 0; o < l.out_channels; ++o) z[o] += w[o*in]*a;
        }
        return;
    }
    const int kh = l.kernel_h, kw = l.kernel_w, s = l.stride, p = l.padding;
    const std::size_t oc_stride = std::size_t(l.in_channels)*kh*kw;
    const std::size_t oplane = std::size_t(g.out.h)*g.out.w;
    const std::size_t iplane = std::size_t(g.in.h)*g.in.w;
    for (auto i: nz) {
        const Real a = x[i];
        const int ic = int(i/iplane);
        const int iy = int((i % iplane)/g.in.w);
        const int ix = int(i % g.in.w);
        for (int ky = 0; ky < kh; ++ky) {
            const int ny = iy + p - ky;
            if (ny < 0 || ny % s) continue;
            const int oy = ny/s;
            if (oy >= g.out.h) continue;
            for (int kx = 0; kx < kw; ++kx) {
                const int nx = ix + p - kx;
                if (nx < 0 || nx % s) continue;
                const int ox = nx/s;
                if (ox >= g.out.w) continue;
                const Real* w = l.weights.data() + (std::size_t(ic)*kh + ky)*kw + kx;
                Real* zz = z.data() + std::size_t(oy)*g.out.w + ox;
                for (int oc = 0; oc < l.out_channels; ++oc) zz[oc*oplane] += w[oc*oc_stride]*a;
            }
        }
    }
}

template <typename Real>
void nonzeros(std::span<const Real> x, std::vector<std::uint32_t>& nz) {
    nz.clear();
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] != Real(0)) nz.push_back(std::uint32_t(i));
    }
}

template <typename Real>
void sum_pool_into(std::span<const Real> in, shape3 g, int factor, std::span<Real> out) {
    if (factor == 1) {
        std::copy(in.begin(), in.end(), out.begin());
        return;
    }
    std::fill(out.begin(), out.end(), Real(0));
    const int oh = g.h/factor, ow = g.w/factor;
    for (int c = 0; c < g.c; ++c) {
        for (int y = 0; y < g.h; ++y) {
            const Real* src = in.data() + (std::size_t(c)*g.h + y)*g.w;
            Real* dst = out.data() + (std::size_t(c)*oh + y/factor)*ow;
            for (int x = 0; x < g.w; ++x) dst[x/factor] += src[x];
        }
    }
}

} // namespace detail

} // namespace tripwire::snn
