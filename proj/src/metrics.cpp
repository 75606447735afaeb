#include "duallaat/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace duallaat {

namespace {

void check_shapes(const ScoreMatrix& scores, const TargetMatrix& targets)
{
    if (scores.rows() != targets.rows() || scores.cols() != targets.cols()) {
        throw std::invalid_argument("score and target shapes differ");
    }
}

double f1_from(double tp, double fp, double fn)
{
    const double denom = 2 * tp + fp + fn;
    return denom > 0 ? 2 * tp / denom : 0.0;
}

}  // namespace

F1Scores f1_scores(const ScoreMatrix& scores, const TargetMatrix& targets, double threshold)
{
    check_shapes(scores, targets);
    F1Scores out;
    double tp = 0, fp = 0, fn = 0;
    double macro_sum = 0;
    for (Index c = 0; c < scores.cols(); ++c) {
        double ctp = 0, cfp = 0, cfn = 0;
        for (Index r = 0; r < scores.rows(); ++r) {
            const bool pred = scores(r, c) >= threshold;
            const bool gold = targets(r, c) > 0.5;
            ctp += pred && gold;
            cfp += pred && !gold;
            cfn += !pred && gold;
        }
        tp += ctp;
        fp += cfp;
        fn += cfn;
        if (ctp + cfp + cfn > 0) {
            macro_sum += f1_from(ctp, cfp, cfn);
            ++out.macro_codes;
        }
    }
    out.micro = f1_from(tp, fp, fn);
    out.macro = out.macro_codes ? macro_sum / static_cast<double>(out.macro_codes) : 0.0;
    return out;
}

std::optional<double> auc(const std::vector<double>& scores, const std::vector<bool>& labels)
{
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos = 0, rank_sum = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]]) {
                rank_sum += midrank;
                pos += 1;
            }
        }
        i = j;
    }
    const double neg = static_cast<double>(n) - pos;
    if (pos == 0 || neg == 0) return std::nullopt;
    return (rank_sum - pos * (pos + 1) / 2) / (pos * neg);
}

AucScores auc_roc(const ScoreMatrix& scores, const TargetMatrix& targets)
{
    check_shapes(scores, targets);
    AucScores out;
    std::vector<double> all_scores;
    std::vector<bool> all_labels;
    all_scores.reserve(static_cast<std::size_t>(scores.size()));
    all_labels.reserve(static_cast<std::size_t>(scores.size()));
    double macro_sum = 0;
    std::vector<double> col_scores;
    std::vector<bool> col_labels;
    for (Index c = 0; c < scores.cols(); ++c) {
        col_scores.clear();
        col_labels.clear();
        for (Index r = 0; r < scores.rows(); ++r) {
            col_scores.push_back(scores(r, c));
            col_labels.push_back(targets(r, c) > 0.5);
        }
        all_scores.insert(all_scores.end(), col_scores.begin(), col_scores.end());
        all_labels.insert(all_labels.end(), col_labels.begin(), col_labels.end());
        if (auto a = auc(col_scores, col_labels)) {
            macro_sum += *a;
            ++out.macro_codes;
        }
    }
    out.micro = auc(all_scores, all_labels);
    if (out.macro_codes) out.macro = macro_sum / static_cast<double>(out.macro_codes);
    return out;
}

RankingScores ranking_metrics(const ScoreMatrix& scores, const TargetMatrix& targets, const std::vector<int>& ks,
                              const std::vector<std::string>& tie_keys)
{
    check_shapes(scores, targets);
    if (!tie_keys.empty() && static_cast<Index>(tie_keys.size()) != scores.cols()) {
        throw std::invalid_argument("one tie key per code is required");
    }
    RankingScores out;
    for (int k : ks) out.precision_at[k] = 0;
    std::vector<Index> order(static_cast<std::size_t>(scores.cols()));
    for (Index r = 0; r < scores.rows(); ++r) {
        std::size_t gold = 0;
        for (Index c = 0; c < scores.cols(); ++c) gold += targets(r, c) > 0.5;
        if (gold == 0) {
            ++out.excluded_notes;
            continue;
        }
        std::iota(order.begin(), order.end(), Index{0});
        std::sort(order.begin(), order.end(), [&](Index a, Index b) {
            if (scores(r, a) != scores(r, b)) return scores(r, a) > scores(r, b);
            if (!tie_keys.empty()) return tie_keys[static_cast<std::size_t>(a)] < tie_keys[static_cast<std::size_t>(b)];
            return a < b;
        });
        std::vector<std::size_t> hits_at(order.size() + 1, 0);  // hits within the top i
        double ap = 0;
        for (std::size_t i = 0; i < order.size(); ++i) {
            const bool hit = targets(r, order[i]) > 0.5;
            hits_at[i + 1] = hits_at[i] + hit;
            if (hit) ap += static_cast<double>(hits_at[i + 1]) / static_cast<double>(i + 1);
        }
        auto hits_within = [&](std::size_t k) { return hits_at[std::min(k, order.size())]; };
        for (int k : ks) out.precision_at[k] += static_cast<double>(hits_within(static_cast<std::size_t>(k))) / k;
        out.r_precision += static_cast<double>(hits_within(gold)) / static_cast<double>(gold);
        out.map += ap / static_cast<double>(gold);
        ++out.notes;
    }
    if (out.notes) {
        const auto n = static_cast<double>(out.notes);
        for (auto& [k, v] : out.precision_at) v /= n;
        out.r_precision /= n;
        out.map /= n;
    }
    return out;
}

double tune_threshold(const ScoreMatrix& scores, const TargetMatrix& targets)
{
    check_shapes(scores, targets);
    const auto n = static_cast<std::size_t>(scores.size());
    if (n == 0) return 0.5;
    std::vector<std::pair<double, bool>> cells(n);
    double positives = 0;
    for (std::size_t i = 0; i < n; ++i) {
        cells[i] = {scores.data()[i], targets.data()[i] > 0.5};
        positives += cells[i].second;
    }
    std::sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

    // Start with nothing predicted; lower the cut one distinct score at a time.
    double best_threshold = std::nextafter(cells.front().first, std::numeric_limits<double>::infinity());
    double best_f1 = 0;
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && cells[j].first == cells[i].first) {
            tp += cells[j].second;
            fp += !cells[j].second;
            ++j;
        }
        const double f1 = f1_from(tp, fp, positives - tp);
        if (f1 > best_f1) {
            best_f1 = f1;
            best_threshold = j < n ? 0.5 * (cells[i].first + cells[j].first) : cells[i].first;
        }
        i = j;
    }
    return best_threshold;
}

StratumReport score_stratum(const std::string& name, const ScoreMatrix& scores, const TargetMatrix& targets,
                            double threshold, const std::vector<std::string>& tie_keys, const std::vector<int>& ks)
{
    StratumReport r;
    r.stratum = name;
    r.notes = static_cast<std::size_t>(scores.rows());
    r.codes = static_cast<std::size_t>(scores.cols());
    r.threshold = threshold;
    r.f1 = f1_scores(scores, targets, threshold);
    r.auc = auc_roc(scores, targets);
    r.ranking = ranking_metrics(scores, targets, ks, tie_keys);
    return r;
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v)
{
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

std::string report_json(const EvalReport& report, const std::string& config_json)
{
    nlohmann::ordered_json j;
    j["config"] = nlohmann::ordered_json::parse(config_json);
    j["strata"] = nlohmann::ordered_json::array();
    for (const auto& s : report.strata) {
        nlohmann::ordered_json e;
        e["stratum"] = s.stratum;
        e["notes"] = s.notes;
        e["codes"] = s.codes;
        e["threshold"] = s.threshold;
        e["f1_micro"] = s.f1.micro;
        e["f1_macro"] = s.f1.macro;
        e["f1_macro_codes"] = s.f1.macro_codes;
        e["auc_roc_micro"] = optional_json(s.auc.micro);
        e["auc_roc_macro"] = optional_json(s.auc.macro);
        e["auc_roc_macro_codes"] = s.auc.macro_codes;
        for (const auto& [k, v] : s.ranking.precision_at) e["precision_at_" + std::to_string(k)] = v;
        e["r_precision"] = s.ranking.r_precision;
        e["map"] = s.ranking.map;
        e["ranked_notes"] = s.ranking.notes;
        e["notes_without_gold"] = s.ranking.excluded_notes;
        j["strata"].push_back(std::move(e));
    }
    return j.dump(2) + "\n";
}

std::string report_text(const EvalReport& report)
{
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    auto opt = [&](const std::optional<double>& v) -> std::string {
        if (!v) return "n/a";
        std::ostringstream s;
        s << std::fixed << std::setprecision(4) << *v;
        return s.str();
    };
    for (const auto& s : report.strata) {
        os << "[" << s.stratum << "] notes=" << s.notes << " codes=" << s.codes << " threshold=" << s.threshold << "\n";
        os << "  auc_roc  micro=" << opt(s.auc.micro) << " macro=" << opt(s.auc.macro) << "\n";
        os << "  f1       micro=" << s.f1.micro << " macro=" << s.f1.macro << "\n";
        os << "  ranking ";
        for (const auto& [k, v] : s.ranking.precision_at) os << " p@" << k << "=" << v;
        os << " r_precision=" << s.ranking.r_precision << " map=" << s.ranking.map << " (over "
           << s.ranking.notes << " notes)\n";
    }
    return os.str();
}

}  // namespace duallaat
