#include "hutk/train.hpp"

#include <algorithm>
#include <cmath>

namespace hutk {

std::vector<int64_t> expand_spans(const std::vector<int64_t>& starts, int64_t span_len, int64_t t) {
    std::vector<bool> hit(static_cast<size_t>(t), false);
    for (int64_t s : starts) {
        require(0 <= s && s < t, ErrorCode::ShapeMismatch, "span start out of range");
        for (int64_t i = s; i < std::min(s + span_len, t); ++i) {
            hit[static_cast<size_t>(i)] = true;
        }
    }
    std::vector<int64_t> out;
    for (int64_t i = 0; i < t; ++i) {
        if (hit[static_cast<size_t>(i)]) {
            out.push_back(i);
        }
    }
    return out;
}

std::vector<int64_t> sample_mask(int64_t t, const MaskSpec& spec, Rng& rng) {
    require(t >= 1, ErrorCode::ShapeMismatch, "sample_mask: empty sequence");
    require(spec.mask_prob >= 0.0 && spec.mask_prob <= 1.0 && spec.span_len >= 1,
            ErrorCode::BadConfig, "sample_mask: bad mask spec");
    std::vector<int64_t> starts;
    for (int64_t i = 0; i < t; ++i) {
        if (rng.uniform() < spec.mask_prob) {
            starts.push_back(i);
        }
    }
    if (starts.empty() && spec.force_nonempty) {
        starts.push_back(static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(t))));
    }
    return expand_spans(starts, spec.span_len, t);
}

OptState OptState::init(const ModelState<float>& state) {
    OptState opt;
    for (const auto& t : state.tensors) {
        opt.m.push_back(Tensor<float>::zeros(t.shape));
        opt.v.push_back(Tensor<float>::zeros(t.shape));
    }
    return opt;
}

double global_grad_norm(const std::vector<Tensor<float>>& grads) {
    double acc = 0.0;
    for (const auto& g : grads) {
        for (const float v : g.data) {
            acc += static_cast<double>(v) * static_cast<double>(v);
        }
    }
    return std::sqrt(acc);
}

void adam_step(ModelState<float>& state, OptState& opt, std::vector<Tensor<float>>& grads,
               const OptConfig& cfg) {
    require(grads.size() == state.tensors.size() && opt.m.size() == state.tensors.size(),
            ErrorCode::ShapeMismatch, "adam_step: parameter list mismatch");
    for (size_t i = 0; i < grads.size(); ++i) {
        require(grads[i].same_shape(state.tensors[i]), ErrorCode::ShapeMismatch,
                "adam_step: gradient shape mismatch for " + state.names[i]);
        require(grads[i].all_finite(), ErrorCode::NonFinite,
                "adam_step: non-finite gradient for " + state.names[i] + ", step aborted");
    }

    double scale = 1.0;
    if (cfg.clip_norm > 0.0) {
        const double norm = global_grad_norm(grads);
        if (norm > cfg.clip_norm) {
            scale = cfg.clip_norm / norm;
        }
    }

    opt.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(opt.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(opt.t));
    for (size_t i = 0; i < grads.size(); ++i) {
        float* m = opt.m[i].data.data();
        float* v = opt.v[i].data.data();
        float* p = state.tensors[i].data.data();
        const float* g = grads[i].data.data();
        const size_t n = grads[i].data.size();
        for (size_t j = 0; j < n; ++j) {
            const double gj = static_cast<double>(g[j]) * scale;
            const double mj = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            const double vj = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            m[j] = static_cast<float>(mj);
            v[j] = static_cast<float>(vj);
            const double mhat = mj / bc1;
            const double vhat = vj / bc2;
            p[j] = static_cast<float>(p[j] - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
        }
    }
}

}  // namespace hutk
