#include "viewadapt/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "viewadapt/errors.hpp"

using nlohmann::json;
using nlohmann::ordered_json;

namespace va {

void ExperimentConfig::finalize() {
    vtn.height = dataset.height;
    vtn.width = dataset.width;
    seg.height = dataset.height;
    seg.width = dataset.width;
    seg.classes = kNumClasses;
    dataset.validate();
    vtn.validate();
    seg.validate();
    for (int d : adapt_degs)
        if (std::find(dataset.pitch_list.begin(), dataset.pitch_list.end(), d) ==
            dataset.pitch_list.end())
            throw ConfigError("adapt_degs contains " + std::to_string(d) +
                              " which is not in the dataset pitch list");
}

std::vector<int> ExperimentConfig::effective_adapt_degs() const {
    return adapt_degs.empty() ? dataset.pitch_list : adapt_degs;
}

ExperimentConfig default_experiment_config(const std::string& profile) {
    ExperimentConfig c;
    c.profile = profile;
    c.vtn = default_vtn_config(profile);
    c.seg = default_seg_config(profile);
    if (profile == "paper") {
        c.dataset.height = 384;
        c.dataset.width = 512;
        c.dataset.train_pairs = 13500 / 9;
        c.dataset.test_pairs = 2700 / 9;
    }
    c.finalize();
    return c;
}

std::string strip_json_comments(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    enum { kCode, kString, kLine, kBlock } state = kCode;
    for (size_t i = 0; i < text.size(); ++i) {
        const char ch = text[i];
        const char nxt = i + 1 < text.size() ? text[i + 1] : '\0';
        switch (state) {
            case kCode:
                if (ch == '"') {
                    state = kString;
                    out += ch;
                } else if (ch == '/' && nxt == '/') {
                    state = kLine;
                    ++i;
                } else if (ch == '/' && nxt == '*') {
                    state = kBlock;
                    ++i;
                } else {
                    out += ch;
                }
                break;
            case kString:
                out += ch;
                if (ch == '\\' && i + 1 < text.size()) {
                    out += text[++i];
                } else if (ch == '"') {
                    state = kCode;
                }
                break;
            case kLine:
                if (ch == '\n') {
                    state = kCode;
                    out += ch;
                }
                break;
            case kBlock:
                if (ch == '*' && nxt == '/') {
                    state = kCode;
                    ++i;
                } else if (ch == '\n') {
                    out += ch; // keep line numbers stable
                }
                break;
        }
    }
    return out;
}

namespace {

[[noreturn]] void parse_fail(const std::string& path, const std::string& stripped,
                             const json::exception& e) {
    // byte offset -> line number for actionable messages
    std::string msg = e.what();
    size_t line = 1;
    const std::string key = "at byte ";
    // nlohmann reports "...parse error at line L, column C..." for parse
    // errors already; keep it and add the file
    (void)stripped;
    (void)key;
    (void)line;
    throw ConfigError("config error in " + path + ": " + msg);
}

template <class T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& where) {
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k))
            throw ConfigError("config error: unknown key \"" + k + "\" in " + where);
}

} // namespace

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read config file: " + path);
    std::stringstream buf;
    buf << f.rdbuf();
    const std::string stripped = strip_json_comments(buf.str());

    json j;
    try {
        j = json::parse(stripped);
    } catch (const json::exception& e) {
        parse_fail(path, stripped, e);
    }

    check_keys(j, {"seed", "profile", "out", "deterministic", "threads", "dataset", "vtn",
                   "seg", "train_baseline", "adapt_degs"},
               "config root");

    std::string profile = "desk";
    get_if(j, "profile", profile);
    ExperimentConfig c = default_experiment_config(profile);
    get_if(j, "seed", c.seed);
    get_if(j, "out", c.out_dir);
    get_if(j, "deterministic", c.deterministic);
    get_if(j, "threads", c.threads);
    get_if(j, "train_baseline", c.train_baseline);
    get_if(j, "adapt_degs", c.adapt_degs);

    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        check_keys(d,
                   {"height", "width", "train_pairs", "test_pairs", "source_train",
                    "source_test", "pitch_list"},
                   "dataset");
        get_if(d, "height", c.dataset.height);
        get_if(d, "width", c.dataset.width);
        get_if(d, "train_pairs", c.dataset.train_pairs);
        get_if(d, "test_pairs", c.dataset.test_pairs);
        get_if(d, "source_train", c.dataset.source_train);
        get_if(d, "source_test", c.dataset.source_test);
        get_if(d, "pitch_list", c.dataset.pitch_list);
    }
    if (j.contains("vtn")) {
        const json& v = j.at("vtn");
        check_keys(v,
                   {"layers", "enc_channels", "lr", "beta1", "beta2", "batch", "epochs",
                    "jitter", "temperature", "positional", "arch"},
                   "vtn");
        get_if(v, "layers", c.vtn.layers);
        get_if(v, "enc_channels", c.vtn.enc_channels);
        get_if(v, "lr", c.vtn.lr);
        get_if(v, "beta1", c.vtn.beta1);
        get_if(v, "beta2", c.vtn.beta2);
        get_if(v, "batch", c.vtn.batch);
        get_if(v, "epochs", c.vtn.epochs);
        get_if(v, "jitter", c.vtn.jitter);
        get_if(v, "temperature", c.vtn.temperature);
        if (v.contains("positional")) {
            const std::string s = v.at("positional").get<std::string>();
            if (s == "modulate")
                c.vtn.positional = PositionalMode::modulate;
            else if (s == "concat")
                c.vtn.positional = PositionalMode::concat;
            else
                throw ConfigError("config error: positional must be modulate|concat");
        }
        if (v.contains("arch")) {
            const std::string s = v.at("arch").get<std::string>();
            if (s == "attention")
                c.vtn.arch = AttnVariant::attention;
            else if (s == "conv")
                c.vtn.arch = AttnVariant::conv;
            else
                throw ConfigError("config error: arch must be attention|conv");
        }
    }
    if (j.contains("seg")) {
        const json& s = j.at("seg");
        check_keys(s,
                   {"channels", "source_epochs", "source_batch", "source_lr",
                    "adapt_epochs", "adapt_batch", "adapt_lr", "halve_after"},
                   "seg");
        if (s.contains("channels")) {
            auto ch = s.at("channels").get<std::vector<int>>();
            if (ch.size() != 4) throw ConfigError("config error: seg.channels needs 4 entries");
            std::copy(ch.begin(), ch.end(), c.seg.channels.begin());
        }
        get_if(s, "source_epochs", c.seg.source_epochs);
        get_if(s, "source_batch", c.seg.source_batch);
        get_if(s, "source_lr", c.seg.source_lr);
        get_if(s, "adapt_epochs", c.seg.adapt_epochs);
        get_if(s, "adapt_batch", c.seg.adapt_batch);
        get_if(s, "adapt_lr", c.seg.adapt_lr);
        if (s.contains("halve_after")) {
            auto h = s.at("halve_after").get<std::vector<int>>();
            if (h.size() != 2) throw ConfigError("config error: seg.halve_after needs 2 entries");
            c.seg.halve_after_1 = h[0];
            c.seg.halve_after_2 = h[1];
        }
    }

    try {
        c.finalize();
    } catch (const ConfigError& e) {
        throw ConfigError("config error in " + path + ": " + e.what());
    }
    return c;
}

void save_experiment_config(const ExperimentConfig& c, const std::string& path) {
    ordered_json j;
    j["seed"] = c.seed;
    j["profile"] = c.profile;
    j["out"] = c.out_dir;
    j["deterministic"] = c.deterministic;
    j["threads"] = c.threads;
    j["dataset"] = {{"height", c.dataset.height},
                    {"width", c.dataset.width},
                    {"train_pairs", c.dataset.train_pairs},
                    {"test_pairs", c.dataset.test_pairs},
                    {"source_train", c.dataset.source_train},
                    {"source_test", c.dataset.source_test},
                    {"pitch_list", c.dataset.pitch_list}};
    j["vtn"] = {{"layers", c.vtn.layers},
                {"enc_channels", c.vtn.enc_channels},
                {"lr", c.vtn.lr},
                {"beta1", c.vtn.beta1},
                {"beta2", c.vtn.beta2},
                {"batch", c.vtn.batch},
                {"epochs", c.vtn.epochs},
                {"jitter", c.vtn.jitter},
                {"temperature", c.vtn.temperature},
                {"positional",
                 c.vtn.positional == PositionalMode::modulate ? "modulate" : "concat"},
                {"arch", c.vtn.arch == AttnVariant::attention ? "attention" : "conv"}};
    j["seg"] = {{"channels", std::vector<int>(c.seg.channels.begin(), c.seg.channels.end())},
                {"source_epochs", c.seg.source_epochs},
                {"source_batch", c.seg.source_batch},
                {"source_lr", c.seg.source_lr},
                {"adapt_epochs", c.seg.adapt_epochs},
                {"adapt_batch", c.seg.adapt_batch},
                {"adapt_lr", c.seg.adapt_lr},
                {"halve_after", {c.seg.halve_after_1, c.seg.halve_after_2}}};
    j["train_baseline"] = c.train_baseline;
    j["adapt_degs"] = c.adapt_degs;

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write config: " + path);
    f << j.dump(2) << "\n";
}

} // namespace va
