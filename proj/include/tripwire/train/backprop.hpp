#pragma once

// Gradient kernels shared by the spiking and ReLU backward passes.

#include <cstdint>
#include <span>
#include <vector>

#include <tripwire/snn/network.hpp>

namespace tripwire::train::detail {

using snn::basic_layer_spec;
using snn::layer_geometry;
using snn::layer_kind;
using snn::shape3;

// dW += dz x^T, visiting only the non-zero inputs listed in nz.
template <typename Real>
void weight_grad(const basic_layer_spec<Real>& l, const layer_geometry& g, std::span<const Real> x,
                 std::span<const std::uint32_t> nz, std::span<const Real> dz, std::span<Real> dw)
{
    if (l.kind == layer_kind::fc) {
        const std::size_t in = l.in_channels;
        for (auto i: nz) {
            const Real a = x[i];
            Real* w = dw.data() + i;
            for (int o = 0; o < l.out_channels; ++o) w[o*in] += dz[o]*a;
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
                Real* w = dw.data() + (std::size_t(ic)*kh + ky)*kw + kx;
                const Real* d = dz.data() + std::size_t(oy)*g.out.w + ox;
                for (int oc = 0; oc < l.out_channels; ++oc) w[oc*oc_stride] += d[oc*oplane]*a;
            }
        }
    }
}

// dx += W^T dz, skipping zero entries of dz.
template <typename Real>
void input_grad(const basic_layer_spec<Real>& l, const layer_geometry& g, std::span<const Real> dz,
                std::span<Real> dx)
{
    if (l.kind == layer_kind::fc) {
        const std::size_t in = l.in_channels;
        for (int o = 0; o < l.out_channels; ++o) {
            const Real d = dz[o];
            if (d == Real(0)) continue;
            const Real* w = l.weights.data() + o*in;
            for (std::size_t i = 0; i < in; ++i) dx[i] += w[i]*d;
        }
        return;
    }
    const int kh = l.kernel_h, kw = l.kernel_w, s = l.stride, p = l.padding;
    for (int oc = 0; oc < l.out_channels; ++oc) {
        for (int oy = 0; oy < g.out.h; ++oy) {
            for (int ox = 0; ox < g.out.w; ++ox) {
                const Real d = dz[(std::size_t(oc)*g.out.h + oy)*g.out.w + ox];
                if (d == Real(0)) continue;
                for (int ic = 0; ic < g.in.c; ++ic) {
                    const Real* w = l.weights.data() + (std::size_t(oc)*l.in_channels + ic)*kh*kw;
                    for (int ky = 0; ky < kh; ++ky) {
                        const int iy = oy*s - p + ky;
                        if (iy < 0 || iy >= g.in.h) continue;
                        Real* row = dx.data() + (std::size_t(ic)*g.in.h + iy)*g.in.w;
                        for (int kx = 0; kx < kw; ++kx) {
                            const int ix = ox*s - p + kx;
                            if (ix < 0 || ix >= g.in.w) continue;
                            row[ix] += w[ky*kw + kx]*d;
                        }
                    }
                }
            }
        }
    }
}

// Gradient of a sum pool: every input cell receives its pooled cell's gradient.
template <typename Real>
void unpool(std::span<const Real> dpooled, shape3 g, int factor, std::span<Real> dout) {
    if (factor == 1) {
        std::copy(dpooled.begin(), dpooled.end(), dout.begin());
        return;
    }
    const int oh = g.h/factor, ow = g.w/factor;
    for (int c = 0; c < g.c; ++c) {
        for (int y = 0; y < g.h; ++y) {
            const Real* src = dpooled.data() + (std::size_t(c)*oh + y/factor)*ow;
            Real* dst = dout.data() + (std::size_t(c)*g.h + y)*g.w;
            for (int x = 0; x < g.w; ++x) dst[x] = src[x/factor];
        }
    }
}

} // namespace tripwire::train::detail
