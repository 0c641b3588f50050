#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "hutk/autodiff.hpp"
#include "hutk/charset.hpp"
#include "hutk/common.hpp"
#include "hutk/tensor.hpp"

namespace hutk {

namespace ctc_detail {

inline double log_add(double a, double b) {
    constexpr double ninf = -std::numeric_limits<double>::infinity();
    if (a == ninf) return b;
    if (b == ninf) return a;
    double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

template <typename T>
void check_instance(const Tensor<T>& log_probs,
                    const std::vector<uint16_t>& target) {
    require(log_probs.shape.size() == 2, ErrorCode::ShapeMismatch,
            "log_probs must be rank 2");
    require(log_probs.shape[0] >= 1 && log_probs.shape[1] >= 2,
            ErrorCode::ShapeMismatch, "log_probs must be T x (V+1) with V >= 1");
    int64_t classes = log_probs.shape[1];
    for (uint16_t id : target) {
        require(id != kCtcBlank && id < classes, ErrorCode::TargetOutOfRange,
                "target id " + std::to_string(id) + " outside [1, " +
                    std::to_string(classes - 1) + "]");
    }
}

inline std::vector<int> extended_labels(const std::vector<uint16_t>& target) {
    std::vector<int> ext(2 * target.size() + 1, kCtcBlank);
    for (size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];
    return ext;
}

inline int64_t min_alignable_frames(const std::vector<uint16_t>& target) {
    int64_t repeats = 0;
    for (size_t i = 1; i < target.size(); ++i) {
        if (target[i] == target[i - 1]) ++repeats;
    }
    return static_cast<int64_t>(target.size()) + repeats;
}

}  // namespace ctc_detail

// Negative log-likelihood of the target under per-frame log scores, summing
// over every frame labelling that collapses (merge repeats, drop blanks) to
// the target. Rows need not be normalized; entries are treated as log weights.
template <typename T>
double ctc_loss(const Tensor<T>& log_probs, const std::vector<uint16_t>& target,
                Tensor<T>* grad_out = nullptr) {
    using ctc_detail::log_add;
    constexpr double ninf = -std::numeric_limits<double>::infinity();
    ctc_detail::check_instance(log_probs, target);
    const int64_t t_frames = log_probs.shape[0];
    require(ctc_detail::min_alignable_frames(target) <= t_frames,
            ErrorCode::InfeasibleAlignment,
            "target needs " +
                std::to_string(ctc_detail::min_alignable_frames(target)) +
                " frames but only " + std::to_string(t_frames) + " available");

    const std::vector<int> ext = ctc_detail::extended_labels(target);
    const int64_t s_states = static_cast<int64_t>(ext.size());
    const auto lp = [&](int64_t t, int s) {
        return static_cast<double>(log_probs.at(t, ext[s]));
    };
    const auto can_skip = [&](int64_t s) {
        return s >= 2 && ext[s] != kCtcBlank && ext[s] != ext[s - 2];
    };

    std::vector<double> alpha(t_frames * s_states, ninf);
    alpha[0] = lp(0, 0);
    if (s_states > 1) alpha[1] = lp(0, 1);
    for (int64_t t = 1; t < t_frames; ++t) {
        for (int64_t s = 0; s < s_states; ++s) {
            double acc = alpha[(t - 1) * s_states + s];
            if (s >= 1) acc = log_add(acc, alpha[(t - 1) * s_states + s - 1]);
            if (can_skip(s)) acc = log_add(acc, alpha[(t - 1) * s_states + s - 2]);
            alpha[t * s_states + s] = acc == ninf ? ninf : acc + lp(t, s);
        }
    }
    double log_z = alpha[(t_frames - 1) * s_states + s_states - 1];
    if (s_states > 1) {
        log_z = log_add(log_z, alpha[(t_frames - 1) * s_states + s_states - 2]);
    }
    require(log_z != ninf, ErrorCode::InfeasibleAlignment,
            "target has zero probability mass");

    if (grad_out != nullptr) {
        // beta[t][s] covers frames t+1..T-1, so alpha+beta is the log mass of
        // paths through state s at frame t.
        std::vector<double> beta(t_frames * s_states, ninf);
        beta[(t_frames - 1) * s_states + s_states - 1] = 0.0;
        if (s_states > 1) beta[(t_frames - 1) * s_states + s_states - 2] = 0.0;
        for (int64_t t = t_frames - 2; t >= 0; --t) {
            for (int64_t s = 0; s < s_states; ++s) {
                double acc = beta[(t + 1) * s_states + s] + lp(t + 1, s);
                if (s + 1 < s_states) {
                    acc = log_add(acc,
                                  beta[(t + 1) * s_states + s + 1] + lp(t + 1, s + 1));
                }
                if (s + 2 < s_states && can_skip(s + 2)) {
                    acc = log_add(acc,
                                  beta[(t + 1) * s_states + s + 2] + lp(t + 1, s + 2));
                }
                beta[t * s_states + s] = acc;
            }
        }
        *grad_out = Tensor<T>::zeros(log_probs.shape);
        std::vector<double> class_mass(log_probs.shape[1]);
        for (int64_t t = 0; t < t_frames; ++t) {
            std::fill(class_mass.begin(), class_mass.end(), ninf);
            for (int64_t s = 0; s < s_states; ++s) {
                double m = alpha[t * s_states + s] + beta[t * s_states + s];
                class_mass[ext[s]] = log_add(class_mass[ext[s]], m);
            }
            for (int64_t k = 0; k < log_probs.shape[1]; ++k) {
                if (class_mass[k] != ninf) {
                    grad_out->at(t, k) =
                        static_cast<T>(-std::exp(class_mass[k] - log_z));
                }
            }
        }
    }
    return -log_z;
}

// Path-enumeration oracle: sums the probability of every frame labelling that
// collapses to the target. Intended for tiny instances only.
template <typename T>
double ctc_brute_force(const Tensor<T>& log_probs,
                       const std::vector<uint16_t>& target) {
    ctc_detail::check_instance(log_probs, target);
    const int64_t t_frames = log_probs.shape[0];
    const int64_t classes = log_probs.shape[1];
    double path_count = 1.0;
    for (int64_t t = 0; t < t_frames; ++t) {
        path_count *= static_cast<double>(classes);
        require(path_count <= 1e6, ErrorCode::InstanceTooLarge,
                "path enumeration exceeds 1e6 paths");
    }
    std::vector<int> path(t_frames, 0);
    std::vector<uint16_t> collapsed;
    double total = 0.0;
    while (true) {
        collapsed.clear();
        double log_p = 0.0;
        int prev = -1;
        for (int64_t t = 0; t < t_frames; ++t) {
            log_p += static_cast<double>(log_probs.at(t, path[t]));
            if (path[t] != prev && path[t] != kCtcBlank) {
                collapsed.push_back(static_cast<uint16_t>(path[t]));
            }
            prev = path[t];
        }
        if (collapsed == target) total += std::exp(log_p);
        int64_t t = t_frames - 1;
        while (t >= 0 && path[t] == classes - 1) path[t--] = 0;
        if (t < 0) break;
        ++path[t];
    }
    return -std::log(total);
}

// Per-frame argmax (ties to the lower index), repeats collapsed, blanks dropped.
template <typename T>
std::vector<uint16_t> greedy_ids(const Tensor<T>& log_probs) {
    require(log_probs.shape.size() == 2 && log_probs.shape[1] >= 1,
            ErrorCode::ShapeMismatch, "log_probs must be rank 2");
    std::vector<uint16_t> out;
    int prev = -1;
    for (int64_t t = 0; t < log_probs.shape[0]; ++t) {
        int best = 0;
        for (int64_t k = 1; k < log_probs.shape[1]; ++k) {
            if (log_probs.at(t, k) > log_probs.at(t, best)) best = static_cast<int>(k);
        }
        if (best != prev && best != kCtcBlank) {
            out.push_back(static_cast<uint16_t>(best));
        }
        prev = best;
    }
    return out;
}

template <typename T>
std::string greedy_decode(const Tensor<T>& log_probs) {
    require(log_probs.shape.size() == 2 &&
                log_probs.shape[1] == charset_size() + 1,
            ErrorCode::ShapeMismatch, "log_probs columns must cover the charset");
    return decode_transcript(greedy_ids(log_probs));
}

// Runs the loss on a tape node holding log scores and seeds the reverse sweep
// with the analytic gradient.
template <typename T>
double ctc_backward(Tape<T>& tape, typename Tape<T>::Id log_probs,
                    const std::vector<uint16_t>& target) {
    Tensor<T> value = tape.value_tensor(log_probs);
    Tensor<T> grad;
    double loss = ctc_loss(value, target, &grad);
    tape.backward_from(log_probs, grad.data);
    return loss;
}

}  // namespace hutk
