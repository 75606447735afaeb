#pragma once

#include "duallaat/tensor.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace duallaat {

using ScoreMatrix = Matrix<double>;   // notes x codes
using TargetMatrix = Matrix<double>;  // notes x codes, entries in {0, 1}

struct F1Scores {
    double micro = 0;
    double macro = 0;
    std::size_t macro_codes = 0;  // codes that entered the macro mean
};

// A cell is predicted positive when its score is >= threshold. Codes with no
// gold and no predicted positive are left out of the macro mean.
F1Scores f1_scores(const ScoreMatrix& scores, const TargetMatrix& targets, double threshold);

struct AucScores {
    std::optional<double> micro;
    std::optional<double> macro;  // absent when no code has both classes
    std::size_t macro_codes = 0;
};

// Mann-Whitney form with midranks for ties.
std::optional<double> auc(const std::vector<double>& scores, const std::vector<bool>& labels);
AucScores auc_roc(const ScoreMatrix& scores, const TargetMatrix& targets);

struct RankingScores {
    std::map<int, double> precision_at;
    double r_precision = 0;
    double map = 0;
    std::size_t notes = 0;           // notes with at least one gold code
    std::size_t excluded_notes = 0;  // notes with none
};

// Codes are ranked by (score desc, tie key asc); tie_keys defaults to column order.
RankingScores ranking_metrics(const ScoreMatrix& scores, const TargetMatrix& targets,
                              const std::vector<int>& ks = {8, 15},
                              const std::vector<std::string>& tie_keys = {});

// Single global threshold maximizing micro F1 over all candidate cut points
// (midpoints between consecutive distinct scores, plus above-max and at-min).
double tune_threshold(const ScoreMatrix& scores, const TargetMatrix& targets);

struct StratumReport {
    std::string stratum;
    std::size_t notes = 0;
    std::size_t codes = 0;
    double threshold = 0.5;
    F1Scores f1;
    AucScores auc;
    RankingScores ranking;
};

struct EvalReport {
    std::vector<StratumReport> strata;
};

StratumReport score_stratum(const std::string& name, const ScoreMatrix& scores, const TargetMatrix& targets,
                            double threshold, const std::vector<std::string>& tie_keys = {},
                            const std::vector<int>& ks = {8, 15});

std::string report_json(const EvalReport& report, const std::string& config_json = "{}");
std::string report_text(const EvalReport& report);

}  // namespace duallaat
