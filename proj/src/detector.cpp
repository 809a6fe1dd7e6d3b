#include "gramsld/detector.hpp"

#include <csignal>
#include <fcntl.h>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

#include "gramsld/error.hpp"

namespace gramsld {

Json training_report_to_json(const TrainingReport& r) {
    Json j{{"loss_d1", r.loss_d1}, {"loss_d2", r.loss_d2}, {"gram_loss", nullptr}, {"epochs", r.epochs}};
    if (r.gram_loss) j["gram_loss"] = *r.gram_loss;
    return j;
}

TrainingReport training_report_from_json(const Json& j) {
    try {
        TrainingReport r;
        r.loss_d1 = j.at("loss_d1").get<double>();
        r.loss_d2 = j.at("loss_d2").get<double>();
        if (j.contains("gram_loss") && !j["gram_loss"].is_null()) r.gram_loss = j["gram_loss"].get<double>();
        r.epochs = j.value("epochs", 0);
        return r;
    } catch (const Json::exception& e) {
        throw PluginFailure(std::string("malformed training report: ") + e.what());
    }
}

std::vector<SampleFeatures> Detector::report_features(const Manifest&, const std::filesystem::path&) {
    throw Unsupported("detector does not expose feature maps");
}

void DetectorCommand::validate() const {
    auto require = [](const std::string& tmpl, const char* name, const char* what) {
        if (tmpl.find(name) == std::string::npos) {
            throw ValidationError(std::string(what) + " template lacks placeholder " + name);
        }
    };
    require(train_template, "{train_manifest}", "train");
    require(train_template, "{work_dir}", "train");
    require(predict_template, "{predict_manifest}", "predict");
    require(predict_template, "{work_dir}", "predict");
    if (features_template) {
        require(*features_template, "{predict_manifest}", "features");
        require(*features_template, "{work_dir}", "features");
    }
    if (timeout.count() <= 0) throw ValidationError("plugin timeout must be positive");
}

std::string expand_template(std::string tmpl, const std::vector<std::pair<std::string, std::string>>& vars) {
    for (const auto& [key, value] : vars) {
        const std::string token = "{" + key + "}";
        for (auto pos = tmpl.find(token); pos != std::string::npos; pos = tmpl.find(token, pos + value.size())) {
            tmpl.replace(pos, token.size(), value);
        }
    }
    return tmpl;
}

ProcessResult run_shell(const std::string& command, std::chrono::seconds timeout,
                        const std::filesystem::path& log_path) {
    const pid_t pid = fork();
    if (pid < 0) throw PluginFailure("fork failed");
    if (pid == 0) {
        int fd = ::open(log_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        if (fd >= 0) {
            dup2(fd, STDOUT_FILENO);
            dup2(fd, STDERR_FILENO);
            close(fd);
        }
        setpgid(0, 0);
        execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }

    ProcessResult result;
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    int status = 0;
    for (;;) {
        const pid_t r = waitpid(pid, &status, WNOHANG);
        if (r == pid) break;
        if (std::chrono::steady_clock::now() >= deadline) {
            kill(-pid, SIGKILL);
            kill(pid, SIGKILL);
            waitpid(pid, &status, 0);
            result.timed_out = true;
            break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    if (!result.timed_out) {
        result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
    } else {
        result.exit_code = -1;
    }
    std::ifstream log(log_path);
    std::stringstream ss;
    ss << log.rdbuf();
    result.output = ss.str();
    return result;
}

ExternalDetector::ExternalDetector(DetectorCommand cmd) : cmd_(std::move(cmd)) { cmd_.validate(); }

void ExternalDetector::invoke(const std::string& tmpl, const std::filesystem::path& manifest_path,
                              const std::filesystem::path& work_dir, const std::string& what) {
    const auto command = expand_template(tmpl, {{"train_manifest", manifest_path.string()},
                                                {"predict_manifest", manifest_path.string()},
                                                {"work_dir", work_dir.string()},
                                                {"config", cmd_.config_path}});
    const auto res = run_shell(command, cmd_.timeout, work_dir / (what + ".log"));
    if (res.timed_out) {
        throw PluginFailure(what + " timed out after " + std::to_string(cmd_.timeout.count()) + "s", res.output);
    }
    if (res.exit_code != 0) {
        throw PluginFailure(what + " exited with code " + std::to_string(res.exit_code), res.output);
    }
}

TrainingReport ExternalDetector::train(const Manifest& train_set, const std::filesystem::path& work_dir) {
    std::filesystem::create_directories(work_dir);
    const auto manifest_path = work_dir / "train_manifest.jsonl";
    save_manifest(manifest_path, train_set);
    const auto report_path = work_dir / "train_report.json";
    std::filesystem::remove(report_path);
    invoke(cmd_.train_template, manifest_path, work_dir, "train");
    std::ifstream in(report_path);
    if (!in) throw PluginFailure("plugin wrote no train_report.json");
    Json j;
    try {
        in >> j;
    } catch (const Json::exception& e) {
        throw PluginFailure(std::string("malformed training report: ") + e.what());
    }
    return training_report_from_json(j);
}

std::vector<PredictionPair> ExternalDetector::predict(const Manifest& samples,
                                                      const std::filesystem::path& work_dir) {
    std::filesystem::create_directories(work_dir);
    const auto manifest_path = work_dir / "predict_manifest.jsonl";
    save_manifest(manifest_path, samples);
    const auto out_path = work_dir / "predictions.jsonl";
    std::filesystem::remove(out_path);
    invoke(cmd_.predict_template, manifest_path, work_dir, "predict");
    std::vector<PredictionPair> preds;
    try {
        preds = read_predictions(out_path);
    } catch (const std::exception& e) {
        throw PluginFailure(std::string("protocol schema violation: ") + e.what());
    }
    std::map<std::string, PredictionPair> by_id;
    for (auto& p : preds) by_id[p.sample_id] = std::move(p);
    std::vector<PredictionPair> ordered;
    for (const auto& e : samples.entries) {
        auto it = by_id.find(e.id);
        if (it == by_id.end()) throw PluginFailure("plugin returned no prediction for sample '" + e.id + "'");
        ordered.push_back(std::move(it->second));
    }
    return ordered;
}

std::vector<SampleFeatures> ExternalDetector::report_features(const Manifest& samples,
                                                              const std::filesystem::path& work_dir) {
    if (!cmd_.features_template) throw Unsupported("plugin has no feature endpoint");
    std::filesystem::create_directories(work_dir / "features");
    const auto manifest_path = work_dir / "features_manifest.jsonl";
    save_manifest(manifest_path, samples);
    invoke(*cmd_.features_template, manifest_path, work_dir, "features");
    std::vector<SampleFeatures> out;
    for (const auto& e : samples.entries) {
        try {
            out.push_back({e.id, read_feature_csv(work_dir / "features" / (e.id + "_d1.csv")),
                           read_feature_csv(work_dir / "features" / (e.id + "_d2.csv"))});
        } catch (const std::exception& ex) {
            throw PluginFailure(std::string("feature output: ") + ex.what());
        }
    }
    return out;
}

}  // namespace gramsld
