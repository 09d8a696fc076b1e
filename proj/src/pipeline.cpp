#include "viewadapt/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "viewadapt/labels.hpp"
#include "viewadapt/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace va {

namespace {

void apply_runtime(const ExperimentConfig& cfg) {
    if (cfg.deterministic)
        set_max_threads(1);
    else if (cfg.threads > 0)
        set_max_threads(cfg.threads);
}

std::string dataset_dir(const ExperimentConfig& c) { return c.out_dir + "/dataset"; }
std::string vtn_dir(const ExperimentConfig& c) { return c.out_dir + "/vtn"; }
std::string labels_dir(const ExperimentConfig& c) { return c.out_dir + "/labels"; }
std::string seg_dir(const ExperimentConfig& c) { return c.out_dir + "/seg"; }
std::string reports_dir(const ExperimentConfig& c) { return c.out_dir + "/reports"; }

std::string deg_name(int deg) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "deg%03d", deg);
    return buf;
}

std::string pair_label_path(const ExperimentConfig& c, int deg, int frame_id,
                            const std::string& model, const char* kind) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "/%s/f%04d_%s%s", deg_name(deg).c_str(), frame_id,
                  model.c_str(), kind);
    return labels_dir(c) + buf;
}

DatasetManifest require_dataset(const ExperimentConfig& cfg) {
    const std::string path = dataset_dir(cfg) + "/manifest.json";
    if (!fs::exists(path))
        throw MissingArtifactError("missing dataset manifest " + path +
                                   "; run gen-data first");
    return load_manifest(path);
}

std::string vtn_ckpt_path(const ExperimentConfig& cfg, const std::string& model) {
    return vtn_dir(cfg) + "/vtn_" + model + ".ckpt";
}

VTNParams require_vtn(const ExperimentConfig& cfg, const std::string& model) {
    const std::string path = vtn_ckpt_path(cfg, model);
    if (!fs::exists(path))
        throw MissingArtifactError("missing checkpoint " + path + "; run train-vtn first");
    return load_vtn(path);
}

SegParams require_seg_source(const ExperimentConfig& cfg) {
    const std::string path = seg_dir(cfg) + "/seg_source.ckpt";
    if (!fs::exists(path))
        throw MissingArtifactError("missing checkpoint " + path + "; run train-seg first");
    return load_seg(path);
}

std::vector<std::string> available_models(const ExperimentConfig& cfg) {
    std::vector<std::string> models{"attn"};
    if (cfg.train_baseline) models.push_back("unet");
    return models;
}

void write_stats(const std::string& path, const std::vector<EpochStats>& stats) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write stats: " + path);
    for (const auto& st : stats) {
        ordered_json j{{"epoch", st.epoch}, {"mean_loss", st.mean_loss}};
        j["per_layer_loss"] = st.per_layer_loss;
        f << j.dump() << "\n";
    }
}

LabelMap masked_labels(const LabelMap& full, const std::vector<uint8_t>& mask) {
    std::vector<uint8_t> kept;
    for (size_t i = 0; i < full.v.size(); ++i)
        if (mask[i]) kept.push_back(full.v[i]);
    LabelMap out(1, int(kept.size()));
    out.v = std::move(kept);
    return out;
}

} // namespace

void cmd_gen_data(const ExperimentConfig& cfg) {
    apply_runtime(cfg);
    std::fprintf(stderr, "[gen-data] seed=%llu domains=%zu -> %s\n",
                 (unsigned long long)cfg.seed, cfg.dataset.pitch_list.size(),
                 dataset_dir(cfg).c_str());
    build_dataset(cfg.seed, cfg.dataset, dataset_dir(cfg));
}

void cmd_train_vtn(const ExperimentConfig& cfg) {
    apply_runtime(cfg);
    const DatasetManifest m = require_dataset(cfg);
    fs::create_directories(vtn_dir(cfg));

    // color pairs only: the view-transformation network never sees labels
    std::vector<ColorPair> pairs;
    for (const auto& dom : m.domains)
        for (const auto& p : dom.train)
            pairs.push_back({read_ppm(dataset_dir(cfg) + "/" + p.src_image),
                             read_ppm(dataset_dir(cfg) + "/" + p.tgt_image)});

    for (const std::string& model : available_models(cfg)) {
        VTNConfig vc = cfg.vtn;
        vc.arch = model == "attn" ? AttnVariant::attention : AttnVariant::conv;
        std::vector<EpochStats> stats;
        std::fprintf(stderr, "[train-vtn] model=%s pairs=%zu epochs=%d\n", model.c_str(),
                     pairs.size(), vc.epochs);
        VTNParams params = train_vtn(vc, pairs, mix_seed(cfg.seed, hash_str(model)),
                                     [&](const EpochStats& st) {
                                         stats.push_back(st);
                                         std::fprintf(stderr,
                                                      "[train-vtn] %s epoch %d loss %.5f\n",
                                                      model.c_str(), st.epoch, st.mean_loss);
                                     });
        save_vtn(params, vtn_ckpt_path(cfg, model));
        write_stats(vtn_dir(cfg) + "/stats_" + model + ".ndjson", stats);
    }
}

void cmd_hallucinate(const ExperimentConfig& cfg) {
    apply_runtime(cfg);
    const DatasetManifest m = require_dataset(cfg);
    const Palette palette = load_palette(dataset_dir(cfg) + "/" + m.palette_file);

    ordered_json manifest;
    manifest["models"] = ordered_json::array();
    manifest["degs"] = ordered_json::array();
    for (const auto& dom : m.domains) manifest["degs"].push_back(dom.deg);

    for (const std::string& model : available_models(cfg)) {
        VTNParams params = require_vtn(cfg, model);
        manifest["models"].push_back(model);
        for (const auto& dom : m.domains) {
            fs::create_directories(labels_dir(cfg) + "/" + deg_name(dom.deg));
            std::fprintf(stderr, "[hallucinate] model=%s deg=%d pairs=%zu\n", model.c_str(),
                         dom.deg, dom.train.size());
            for (const auto& p : dom.train) {
                const Image x_s = read_ppm(dataset_dir(cfg) + "/" + p.src_image);
                const Image x_t = read_ppm(dataset_dir(cfg) + "/" + p.tgt_image);
                const LabelMap y_s = read_pgm(dataset_dir(cfg) + "/" + p.src_labels);

                const Image sem = render_semantic(y_s, palette);
                const Image halluc = hallucinate_semantic(params, sem, x_s, x_t);
                write_ppm(pair_label_path(cfg, dom.deg, p.frame_id, model, "_halluc.ppm"),
                          halluc);
                write_pgm(pair_label_path(cfg, dom.deg, p.frame_id, model, "_nn.pgm"),
                          nn_decode(halluc, palette));

                SoftLabels soft =
                    functional_decode_vtn(params, y_s, x_s, x_t, m.classes);
                save_soft_labels(soft,
                                 pair_label_path(cfg, dom.deg, p.frame_id, model, ".slbl"));
                if (model == "attn") {
                    const auto ent = entropy_map(soft);
                    write_pgm(pair_label_path(cfg, dom.deg, p.frame_id, model,
                                              "_entropy.pgm"),
                              entropy_to_bytes(ent, soft.h, soft.w, soft.classes));
                }
            }
        }
    }
    std::ofstream f(labels_dir(cfg) + "/manifest.json", std::ios::binary);
    if (!f) throw IoError("cannot write labels manifest");
    f << manifest.dump(1) << "\n";
}

void cmd_train_seg(const ExperimentConfig& cfg) {
    apply_runtime(cfg);
    const DatasetManifest m = require_dataset(cfg);
    fs::create_directories(seg_dir(cfg));

    std::vector<std::pair<Image, LabelMap>> data;
    for (const auto& f : m.source_train)
        data.push_back({read_ppm(dataset_dir(cfg) + "/" + f.image),
                        read_pgm(dataset_dir(cfg) + "/" + f.labels)});

    std::vector<EpochStats> stats;
    std::fprintf(stderr, "[train-seg] source frames=%zu epochs=%d\n", data.size(),
                 cfg.seg.source_epochs);
    SegParams params = train_source(cfg.seg, data, mix_seed(cfg.seed, hash_str("seg_source")),
                                    [&](const EpochStats& st) {
                                        stats.push_back(st);
                                        std::fprintf(stderr,
                                                     "[train-seg] epoch %d loss %.5f\n",
                                                     st.epoch, st.mean_loss);
                                    });
    save_seg(params, seg_dir(cfg) + "/seg_source.ckpt");
    write_stats(seg_dir(cfg) + "/stats_source.ndjson", stats);
}

void cmd_adapt(const ExperimentConfig& cfg) {
    apply_runtime(cfg);
    const DatasetManifest m = require_dataset(cfg);
    const SegParams source = require_seg_source(cfg);
    if (!fs::exists(labels_dir(cfg) + "/manifest.json"))
        throw MissingArtifactError("missing labels manifest " + labels_dir(cfg) +
                                   "/manifest.json; run hallucinate first");

    for (int deg : cfg.effective_adapt_degs()) {
        const DomainSet& dom = m.domain(deg);
        std::vector<std::pair<Image, SoftLabels>> data;
        for (const auto& p : dom.train) {
            const std::string slbl = pair_label_path(cfg, deg, p.frame_id, "attn", ".slbl");
            if (!fs::exists(slbl))
                throw MissingArtifactError("missing soft labels " + slbl +
                                           "; run hallucinate first");
            SoftLabels soft = load_soft_labels(slbl);
            if (soft.h != m.height || soft.w != m.width || soft.classes != m.classes)
                throw ConfigError("adapt: soft labels " + slbl +
                                  " do not match the dataset domain (manifest check)");
            data.push_back({read_ppm(dataset_dir(cfg) + "/" + p.tgt_image), std::move(soft)});
        }
        std::vector<EpochStats> stats;
        std::fprintf(stderr, "[adapt] deg=%d pairs=%zu epochs=%d\n", deg, data.size(),
                     cfg.seg.adapt_epochs);
        SegParams adapted =
            adapt_target(source, data, mix_seed(cfg.seed, hash_str("adapt") ^ uint64_t(deg)),
                         [&](const EpochStats& st) {
                             stats.push_back(st);
                             std::fprintf(stderr, "[adapt] deg=%d epoch %d loss %.5f\n", deg,
                                          st.epoch, st.mean_loss);
                         });
        save_seg(adapted, seg_dir(cfg) + "/seg_adapt_" + deg_name(deg) + ".ckpt");
        write_stats(seg_dir(cfg) + "/stats_adapt_" + deg_name(deg) + ".ndjson", stats);
    }
}

EvalResults evaluate_experiment(const ExperimentConfig& cfg) {
    apply_runtime(cfg);
    const DatasetManifest m = require_dataset(cfg);
    if (!fs::exists(labels_dir(cfg) + "/manifest.json"))
        throw MissingArtifactError("missing labels manifest " + labels_dir(cfg) +
                                   "/manifest.json; run hallucinate first");
    SegParams seg_source = require_seg_source(cfg);

    EvalResults out;

    // hallucinated-label quality on the train split of each target domain
    for (const std::string& model : available_models(cfg)) {
        for (const auto& dom : m.domains) {
            std::vector<LabelMap> nn_preds, func_preds, gts;
            for (const auto& p : dom.train) {
                gts.push_back(read_pgm(dataset_dir(cfg) + "/" + p.tgt_labels));
                nn_preds.push_back(
                    read_pgm(pair_label_path(cfg, dom.deg, p.frame_id, model, "_nn.pgm")));
                func_preds.push_back(
                    load_soft_labels(
                        pair_label_path(cfg, dom.deg, p.frame_id, model, ".slbl"))
                        .argmax());
            }
            const MiouResult nn = miou(nn_preds, gts, m.classes);
            const MiouResult fn = miou(func_preds, gts, m.classes);
            out.label_quality.push_back({model + "_nn", dom.deg, nn.mean, nn.per_class});
            out.label_quality.push_back({model + "_func", dom.deg, fn.mean, fn.per_class});
        }
    }

    // ground-truth correspondence warp: exact on visible pixels by design
    for (const auto& dom : m.domains) {
        double vis_sum = 0;
        ConfusionMatrix cm(m.classes);
        for (const auto& p : dom.train) {
            const Scene scene = generate_scene(p.scene_seed);
            CameraState cam_s = pair_camera(p);
            CameraState cam_t = cam_s;
            cam_t.pitch = double(dom.deg) * M_PI / 180.0;
            const Correspondence corr =
                oracle_correspondence(scene, cam_s, cam_t, m.height, m.width);
            const LabelMap y_s = read_pgm(dataset_dir(cfg) + "/" + p.src_labels);
            const LabelMap y_t = read_pgm(dataset_dir(cfg) + "/" + p.tgt_labels);
            const LabelMap warped = warp_labels(y_s, corr);
            cm.add(masked_labels(warped, corr.visible), masked_labels(y_t, corr.visible));
            vis_sum += visible_fraction(corr);
        }
        out.oracle.push_back(
            {dom.deg, vis_sum / double(dom.train.size()), cm.mean_iou()});
    }

    // segmentation: source-only baseline vs adapted, test splits
    {
        std::vector<LabelMap> preds, gts;
        for (const auto& f : m.source_test) {
            preds.push_back(seg_predict(seg_source, read_ppm(dataset_dir(cfg) + "/" + f.image)));
            gts.push_back(read_pgm(dataset_dir(cfg) + "/" + f.labels));
        }
        out.source_test_miou = miou(preds, gts, m.classes).mean;
    }
    for (int deg : cfg.effective_adapt_degs()) {
        const std::string ckpt = seg_dir(cfg) + "/seg_adapt_" + deg_name(deg) + ".ckpt";
        if (!fs::exists(ckpt))
            throw MissingArtifactError("missing checkpoint " + ckpt + "; run adapt first");
        SegParams adapted = load_seg(ckpt);
        const DomainSet& dom = m.domain(deg);
        std::vector<LabelMap> base_preds, adapt_preds, gts;
        for (const auto& p : dom.test) {
            const Image x_t = read_ppm(dataset_dir(cfg) + "/" + p.tgt_image);
            base_preds.push_back(seg_predict(seg_source, x_t));
            adapt_preds.push_back(seg_predict(adapted, x_t));
            gts.push_back(read_pgm(dataset_dir(cfg) + "/" + p.tgt_labels));
        }
        DomainSegRow row;
        row.deg = deg;
        row.source_only = miou(base_preds, gts, m.classes).mean;
        row.adapted = miou(adapt_preds, gts, m.classes).mean;
        row.gain = adaptation_gain(row.adapted, row.source_only);
        out.seg.push_back(row);
    }
    return out;
}

void save_eval_results(const EvalResults& r, const std::string& path) {
    ordered_json j;
    j["label_quality"] = ordered_json::array();
    for (const auto& q : r.label_quality) {
        ordered_json pc = ordered_json::array();
        for (double v : q.per_class) pc.push_back(std::isnan(v) ? ordered_json(nullptr)
                                                                : ordered_json(v));
        j["label_quality"].push_back({{"method", q.method},
                                      {"domain_deg", q.domain_deg},
                                      {"miou", q.miou},
                                      {"per_class", pc}});
    }
    j["oracle"] = ordered_json::array();
    for (const auto& o : r.oracle)
        j["oracle"].push_back({{"domain_deg", o.deg},
                               {"visible_fraction", o.visible_fraction},
                               {"visible_miou", o.visible_miou}});
    j["segmentation"] = {{"source_test_miou", r.source_test_miou},
                         {"domains", ordered_json::array()}};
    for (const auto& s : r.seg)
        j["segmentation"]["domains"].push_back({{"deg", s.deg},
                                                {"source_only_miou", s.source_only},
                                                {"adapted_miou", s.adapted},
                                                {"gain", s.gain}});
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write evaluation: " + path);
    f << j.dump(1) << "\n";
}

EvalResults load_eval_results(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw MissingArtifactError("missing evaluation " + path + "; run evaluate first");
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw FormatError("evaluation parse error in " + path + ": " + e.what());
    }
    EvalResults r;
    for (const auto& q : j.at("label_quality")) {
        QualityRow row;
        row.method = q.at("method").get<std::string>();
        row.domain_deg = q.at("domain_deg").get<int>();
        row.miou = q.at("miou").get<double>();
        for (const auto& v : q.at("per_class"))
            row.per_class.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                : v.get<double>());
        r.label_quality.push_back(std::move(row));
    }
    for (const auto& o : j.at("oracle"))
        r.oracle.push_back({o.at("domain_deg").get<int>(),
                            o.at("visible_fraction").get<double>(),
                            o.at("visible_miou").get<double>()});
    r.source_test_miou = j.at("segmentation").at("source_test_miou").get<double>();
    for (const auto& s : j.at("segmentation").at("domains"))
        r.seg.push_back({s.at("deg").get<int>(), s.at("source_only_miou").get<double>(),
                         s.at("adapted_miou").get<double>(), s.at("gain").get<double>()});
    return r;
}

void cmd_evaluate(const ExperimentConfig& cfg) {
    fs::create_directories(reports_dir(cfg));
    const EvalResults r = evaluate_experiment(cfg);
    save_eval_results(r, reports_dir(cfg) + "/evaluation.json");
    std::fprintf(stderr, "[evaluate] wrote %s\n",
                 (reports_dir(cfg) + "/evaluation.json").c_str());
}

std::string gain_svg(const std::vector<DomainSegRow>& rows) {
    const int W = 560, H = 360, ml = 60, mr = 20, mt = 20, mb = 50;
    double gmin = 0, gmax = 0;
    for (const auto& r : rows) {
        gmin = std::min(gmin, r.gain);
        gmax = std::max(gmax, r.gain);
    }
    if (gmax - gmin < 1e-6) gmax = gmin + 1e-6;
    const double pad = 0.1 * (gmax - gmin);
    gmin -= pad;
    gmax += pad;
    int dmin = 90, dmax = 10;
    for (const auto& r : rows) {
        dmin = std::min(dmin, r.deg);
        dmax = std::max(dmax, r.deg);
    }
    if (dmax == dmin) dmax = dmin + 1;

    auto px = [&](double deg) {
        return ml + (deg - dmin) / double(dmax - dmin) * (W - ml - mr);
    };
    auto py = [&](double g) { return mt + (gmax - g) / (gmax - gmin) * (H - mt - mb); };

    char buf[256];
    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"560\" height=\"360\" "
         "viewBox=\"0 0 560 360\">\n";
    s += "<rect width=\"560\" height=\"360\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%d\" y1=\"%.1f\" x2=\"%d\" y2=\"%.1f\" stroke=\"#999\" "
                  "stroke-dasharray=\"4 3\"/>\n",
                  ml, py(0.0), W - mr, py(0.0));
    s += buf;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n", ml,
                  H - mb, W - mr, H - mb);
    s += buf;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n", ml,
                  mt, ml, H - mb);
    s += buf;

    std::string points;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.1f,%.1f ", px(r.deg), py(r.gain));
        points += buf;
        std::snprintf(buf, sizeof buf,
                      "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"3\" fill=\"#c33\"/>\n", px(r.deg),
                      py(r.gain));
        s += buf;
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%.1f\" y=\"%d\" font-size=\"12\" "
                      "text-anchor=\"middle\">%d</text>\n",
                      px(r.deg), H - mb + 18, r.deg);
        s += buf;
    }
    std::snprintf(buf, sizeof buf,
                  "<polyline points=\"%s\" fill=\"none\" stroke=\"#c33\" "
                  "stroke-width=\"2\"/>\n",
                  points.c_str());
    s += buf;
    for (double g : {gmin, 0.0, gmax}) {
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%d\" y=\"%.1f\" font-size=\"12\" "
                      "text-anchor=\"end\">%.3f</text>\n",
                      ml - 6, py(g) + 4, g);
        s += buf;
    }
    s += "<text x=\"300\" y=\"352\" font-size=\"13\" text-anchor=\"middle\">pitch gap "
         "(degrees)</text>\n";
    s += "<text x=\"14\" y=\"190\" font-size=\"13\" text-anchor=\"middle\" "
         "transform=\"rotate(-90 14 190)\">adaptation gain (mIoU)</text>\n";
    s += "</svg>\n";
    return s;
}

void cmd_report(const ExperimentConfig& cfg) {
    const EvalResults r = load_eval_results(reports_dir(cfg) + "/evaluation.json");

    std::vector<QualityRow> qrows = r.label_quality;
    for (const auto& o : r.oracle)
        qrows.push_back({"oracle_warp_visible", o.deg, o.visible_miou, {}});
    const std::string quality = format_quality_table(qrows);

    std::string adapt_txt;
    {
        char buf[160];
        adapt_txt += "segmentation mIoU on target test splits\n";
        std::snprintf(buf, sizeof buf, "source-domain test mIoU: %.4f\n\n",
                      r.source_test_miou);
        adapt_txt += buf;
        adapt_txt += "   deg  source-only      adapted         gain\n";
        for (const auto& s : r.seg) {
            std::snprintf(buf, sizeof buf, "%6d %12.4f %12.4f %+12.4f\n", s.deg,
                          s.source_only, s.adapted, s.gain);
            adapt_txt += buf;
        }
    }

    std::string visibility;
    {
        char buf[128];
        visibility += "\nco-visibility (mean visible fraction per domain)\n";
        for (const auto& o : r.oracle) {
            std::snprintf(buf, sizeof buf, "%6d %12.4f\n", o.deg, o.visible_fraction);
            visibility += buf;
        }
    }

    fs::create_directories(reports_dir(cfg));
    {
        std::ofstream f(reports_dir(cfg) + "/label_quality.txt", std::ios::binary);
        f << "hallucinated-label mIoU on target train splits\n" << quality;
    }
    {
        std::ofstream f(reports_dir(cfg) + "/adaptation.txt", std::ios::binary);
        f << adapt_txt << visibility;
    }
    {
        std::ofstream f(reports_dir(cfg) + "/gain.svg", std::ios::binary);
        f << gain_svg(r.seg);
    }
    std::printf("hallucinated-label mIoU on target train splits\n%s\n%s%s\n",
                quality.c_str(), adapt_txt.c_str(), visibility.c_str());
}

void run_all(const ExperimentConfig& cfg) {
    cmd_gen_data(cfg);
    cmd_train_vtn(cfg);
    cmd_hallucinate(cfg);
    cmd_train_seg(cfg);
    cmd_adapt(cfg);
    cmd_evaluate(cfg);
    cmd_report(cfg);
}

} // namespace va
