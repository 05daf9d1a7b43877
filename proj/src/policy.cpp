#include "labelkit/policy.hpp"

#include "labelkit/error.hpp"
#include "labelkit/random.hpp"
#include "labelkit/text.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

namespace labelkit::policy {

std::string_view to_string(Strategy s) { return s == Strategy::uncertainty ? "uncertainty" : "random"; }

Strategy parse_strategy(std::string_view s) {
    if (s == "uncertainty") return Strategy::uncertainty;
    if (s == "random") return Strategy::random;
    fail(ErrorCode::InvalidArgument, "unknown active learning strategy: " + std::string(s));
}

namespace {

std::uint64_t parse_uint(std::string_view s, std::string_view context) {
    s = text::trim(s);
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || p != s.data() + s.size()) {
        fail(ErrorCode::InvalidArgument, "bad number '" + std::string(s) + "' in " + std::string(context));
    }
    return v;
}

} // namespace

ModelSchedule parse_schedule(std::string_view text) {
    ModelSchedule out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const auto item = text::trim(text.substr(start, comma == std::string_view::npos ? text.npos : comma - start));
        start = comma == std::string_view::npos ? text.size() + 1 : comma + 1;
        if (item.empty()) continue;

        const auto colon = item.find(':');
        if (colon == std::string_view::npos) fail(ErrorCode::InvalidArgument, "schedule entry needs flavor:range");
        ScheduleEntry e;
        e.flavor = std::string(text::trim(item.substr(0, colon)));
        const auto range = text::trim(item.substr(colon + 1));
        const auto dash = range.find('-');
        if (dash == std::string_view::npos) {
            e.first = e.last = parse_uint(range, item);
        } else {
            e.first = parse_uint(range.substr(0, dash), item);
            const auto hi = text::trim(range.substr(dash + 1));
            e.last = hi.empty() ? UINT64_MAX : parse_uint(hi, item);
        }
        if (e.flavor.empty() || e.last < e.first) fail(ErrorCode::InvalidArgument, "bad schedule entry: " + std::string(item));
        out.push_back(std::move(e));
    }
    return out;
}

std::string format_schedule(const ModelSchedule& schedule) {
    std::string out;
    for (const auto& e : schedule) {
        if (!out.empty()) out += ',';
        out += e.flavor + ':' + std::to_string(e.first) + '-';
        if (e.last != UINT64_MAX) out += std::to_string(e.last);
    }
    return out;
}

void PolicyConfig::validate() const {
    if (first_model_positive_threshold < 1) fail(ErrorCode::InvalidArgument, "first_model_positive_threshold >= 1");
    if (retrain_label_delta < 1) fail(ErrorCode::InvalidArgument, "retrain_label_delta >= 1");
    if (!(negative_ratio > 0.0) || !std::isfinite(negative_ratio)) fail(ErrorCode::InvalidArgument, "negative_ratio > 0");
    if (precision_sample_size < 1) fail(ErrorCode::InvalidArgument, "precision_sample_size >= 1");
    if (label_next_size < 1) fail(ErrorCode::InvalidArgument, "label_next_size >= 1");
}

bool should_train(const store::LabelCounts& counts, bool has_model, const PolicyConfig& cfg) {
    if (!has_model) return counts.positives >= cfg.first_model_positive_threshold;
    return counts.labels_since_last_train >= cfg.retrain_label_delta;
}

double training_progress(const store::LabelCounts& counts, bool has_model, const PolicyConfig& cfg) {
    const double have = static_cast<double>(has_model ? counts.labels_since_last_train : counts.positives);
    const double need = static_cast<double>(has_model ? cfg.retrain_label_delta : cfg.first_model_positive_threshold);
    return std::min(1.0, have / need);
}

std::size_t TrainingSet::positives() const {
    return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.label > 0; }));
}

std::size_t TrainingSet::negatives() const { return entries.size() - positives(); }

std::vector<std::string> TrainingSet::weak_negatives() const {
    std::vector<std::string> out;
    for (const auto& e : entries) {
        if (e.provenance == store::LabelSource::weak_negative) out.push_back(e.element_id);
    }
    return out;
}

TrainingSet select_training_set(const store::LabelMap& current, std::span<const std::string> unlabeled_pool,
                                const PolicyConfig& cfg, std::uint64_t seed) {
    TrainingSet set;
    std::size_t positives = 0, negatives = 0;
    for (const auto& [id, label] : current) {
        if (label.source == store::LabelSource::weak_negative) continue;
        set.entries.push_back({id, label.positive ? 1 : -1, label.source});
        (label.positive ? positives : negatives)++;
    }
    if (positives == 0) fail(ErrorCode::NoPositives, "training set needs at least one positive label");

    // Guard against 2.0 * 20 landing a hair above 40 in floating point.
    const double raw = cfg.negative_ratio * static_cast<double>(positives);
    const auto target = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
    if (negatives >= target) return set;

    std::vector<std::string> pool;
    pool.reserve(unlabeled_pool.size());
    for (const auto& id : unlabeled_pool) {
        const auto it = current.find(id);
        if (it != current.end() && it->second.source != store::LabelSource::weak_negative) continue;
        pool.push_back(id);
    }
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());

    const std::size_t want = std::min(target - negatives, pool.size());
    Rng rng(seed);
    // Partial Fisher-Yates: the first `want` slots become a uniform sample.
    for (std::size_t i = 0; i < want; ++i) {
        std::swap(pool[i], pool[i + rng.index(pool.size() - i)]);
        set.entries.push_back({pool[i], -1, store::LabelSource::weak_negative});
    }
    return set;
}

std::string model_flavor_for(std::uint64_t iteration, const PolicyConfig& cfg) {
    for (const auto& e : cfg.model_schedule) {
        if (iteration >= e.first && iteration <= e.last) return e.flavor;
    }
    return "light";
}

std::vector<std::string> rank_for_labeling(const std::map<std::string, double>& predictions,
                                           const std::set<std::string>& already_labeled, Strategy strategy,
                                           std::size_t k, std::uint64_t seed) {
    // Uncertainty is quantized so that 0.9 and 0.1 (|p - 0.5| equal up to
    // rounding) fall back to the id tie-break.
    std::vector<std::pair<std::string, std::int64_t>> candidates;
    for (const auto& [id, p] : predictions) {
        if (!already_labeled.contains(id)) {
            candidates.emplace_back(id, std::llround(std::abs(p - 0.5) * 1e12));
        }
    }
    if (strategy == Strategy::uncertainty) {
        const auto take = std::min(k, candidates.size());
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end(),
                          [](const auto& a, const auto& b) {
                              if (a.second != b.second) return a.second < b.second;
                              return a.first < b.first;
                          });
        candidates.resize(take);
    } else {
        Rng rng(seed);
        rng.shuffle(std::span(candidates));
        if (candidates.size() > k) candidates.resize(k);
    }
    std::vector<std::string> out;
    out.reserve(candidates.size());
    for (auto& [id, _] : candidates) out.push_back(std::move(id));
    return out;
}

} // namespace labelkit::policy
