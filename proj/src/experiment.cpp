#include "duallaat/experiment.hpp"

#include "duallaat/error.hpp"
#include "duallaat/evaluate.hpp"
#include "duallaat/text.hpp"
#include "duallaat/trainer.hpp"

#include <cmath>

namespace duallaat {

MixingConfig control_config(MixingConfig c)
{
    c.synth.overlap_fraction = 0;
    c.synth.disjoint_vocab = true;
    return c;
}

double t_critical_95(std::size_t dof)
{
    static constexpr double kTable[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228};
    if (dof == 0) throw std::invalid_argument("t distribution needs at least one degree of freedom");
    return dof <= 10 ? kTable[dof - 1] : 1.96;
}

MixingConfig desk_mixing_config()
{
    MixingConfig c;
    c.synth.n_concepts = 200;
    c.synth.n_docs_v1 = 400;
    c.synth.n_docs_v2 = 400;
    c.run = make_preset("desk", EncoderKind::Cnn);
    return c;
}

bool significant_gain(const DeltaSummary& d)
{
    if (d.per_seed.size() < 2) return d.mean > 0;
    if (d.standard_error == 0) return d.mean > 0;
    return d.mean / d.standard_error > t_critical_95(d.per_seed.size() - 1);
}

namespace {

std::map<std::string, ArmScores> scores_of(const EvalReport& report)
{
    std::map<std::string, ArmScores> out;
    for (const auto& s : report.strata) {
        const auto slash = s.stratum.find('/');
        const auto name = slash == std::string::npos ? s.stratum : s.stratum.substr(slash + 1);
        out[name] = {s.f1.micro, s.ranking.precision_at.at(8), s.ranking.map};
    }
    return out;
}

DeltaSummary summarize(std::vector<double> d)
{
    DeltaSummary s;
    s.per_seed = std::move(d);
    const auto n = static_cast<double>(s.per_seed.size());
    for (double x : s.per_seed) s.mean += x / n;
    if (s.per_seed.size() > 1) {
        double ss = 0;
        for (double x : s.per_seed) ss += (x - s.mean) * (x - s.mean);
        s.standard_error = std::sqrt(ss / (n - 1) / n);
    }
    return s;
}

}  // namespace

MixingReport mixing_experiment(const MixingConfig& config, const std::function<void(const std::string&)>& progress)
{
    if (config.seeds.empty()) throw UsageError("the mixing experiment needs at least one seed");
    auto say = [&](const std::string& m) {
        if (progress) progress(m);
    };
    MixingReport report;
    for (const auto seed : config.seeds) {
        SynthConfig sc = config.synth;
        sc.seed = seed;
        const auto synth = generate(sc);
        const Corpus& corpus = synth.corpus;

        const auto vocab = build_vocab(corpus.documents, corpus.registry, config.run.min_count);
        std::optional<EmbeddingTable> embeddings;
        if (config.pretrain_embeddings) {
            std::vector<TokenSeq> sentences;
            for (const auto& d : corpus.documents) {
                if (d.split == Split::Train) sentences.push_back(vocab.encode_text(d.text));
            }
            for (const auto& e : corpus.registry.entries()) sentences.push_back(vocab.encode_text(e.description));
            SkipGramConfig sg = config.run.embeddings;
            sg.seed = seed;
            embeddings = pretrain_embeddings(sentences, vocab, sg).table;
        }

        Corpus target_only{{}, corpus.registry};
        for (const auto& d : corpus.documents) {
            if (d.version == Version::V10) target_only.documents.push_back(d);
        }

        RunConfig run = config.run;
        run.train.seed = seed;
        EvaluateOptions eval;
        eval.strata = {StratumKind::Rare, StratumKind::Frequent};
        eval.threshold.tuned = config.tuned_threshold;
        eval.version = Version::V10;

        TrainOptions opts;
        opts.embeddings = embeddings;
        opts.validate = false;

        SeedResult result;
        result.seed = seed;
        say("seed " + std::to_string(seed) + ": training on V2 only");
        const auto a = train(target_only, vocab, run, opts);
        result.target_only = scores_of(evaluate(a.last, corpus, eval));
        say("seed " + std::to_string(seed) + ": training on V1+V2");
        const auto b = train(corpus, vocab, run, opts);
        result.mixed = scores_of(evaluate(b.last, corpus, eval));
        report.seeds.push_back(std::move(result));
    }

    for (const std::string stratum : {"rare", "frequent"}) {
        std::map<std::string, std::vector<double>> d;
        for (const auto& s : report.seeds) {
            if (!s.mixed.count(stratum) || !s.target_only.count(stratum)) continue;
            const auto& m = s.mixed.at(stratum);
            const auto& t = s.target_only.at(stratum);
            d["micro_f1"].push_back(m.micro_f1 - t.micro_f1);
            d["p_at_8"].push_back(m.p_at_8 - t.p_at_8);
            d["map"].push_back(m.map - t.map);
        }
        for (auto& [metric, values] : d) report.deltas[stratum][metric] = summarize(std::move(values));
    }
    return report;
}

nlohmann::ordered_json to_json(const MixingReport& r)
{
    auto arm = [](const std::map<std::string, ArmScores>& a) {
        nlohmann::ordered_json j = nlohmann::ordered_json::object();
        for (const auto& [name, s] : a) j[name] = {{"micro_f1", s.micro_f1}, {"p_at_8", s.p_at_8}, {"map", s.map}};
        return j;
    };
    nlohmann::ordered_json j;
    j["seeds"] = nlohmann::ordered_json::array();
    for (const auto& s : r.seeds) {
        j["seeds"].push_back({{"seed", s.seed}, {"v2_only", arm(s.target_only)}, {"v1_v2", arm(s.mixed)}});
    }
    j["deltas"] = nlohmann::ordered_json::object();
    for (const auto& [stratum, metrics] : r.deltas) {
        for (const auto& [metric, d] : metrics) {
            j["deltas"][stratum][metric] = {{"mean", d.mean}, {"standard_error", d.standard_error}, {"per_seed", d.per_seed}};
        }
    }
    return j;
}

}  // namespace duallaat
