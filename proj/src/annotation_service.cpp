#include "gramsld/annotation_service.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>

namespace gramsld {

namespace {

void send_json(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json; charset=utf-8");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, Json{{"error", message}});
}

std::string content_type_for(const std::filesystem::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    return "application/octet-stream";
}

Json parse_body(const httplib::Request& req) {
    try {
        return Json::parse(req.body);
    } catch (const Json::exception& e) {
        throw std::invalid_argument(std::string("request body is not JSON: ") + e.what());
    }
}

std::vector<BoundingBox> parse_boxes(const Json& body) {
    std::vector<BoundingBox> boxes;
    if (!body.contains("boxes")) return boxes;
    if (!body["boxes"].is_array()) throw ValidationError("'boxes' must be an array");
    std::size_t i = 0;
    for (const auto& b : body["boxes"]) {
        try {
            boxes.push_back(box_from_json(b));
        } catch (const std::exception& e) {
            throw ValidationError("box " + std::to_string(i) + " is malformed: " + e.what());
        }
        ++i;
    }
    return boxes;
}

// Maps the error hierarchy onto HTTP status codes.
template <class F>
void guarded(httplib::Response& res, F&& f) {
    try {
        f();
    } catch (const std::invalid_argument& e) {
        send_error(res, 400, e.what());
    } catch (const NotFound& e) {
        send_error(res, 404, e.what());
    } catch (const RevisionConflict& e) {
        send_error(res, 409, e.what());
    } catch (const ReviewDisabled& e) {
        send_error(res, 409, e.what());
    } catch (const ValidationError& e) {
        send_error(res, 422, e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, e.what());
    }
}

}  // namespace

struct AnnotationService::Impl {
    Session& session;
    httplib::Server server;
    std::thread thread;

    explicit Impl(Session& s) : session(s) {
        // SO_REUSEADDR without SO_REUSEPORT
        server.set_socket_options([](socket_t sock) {
            int yes = 1;
            setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
        });
        routes();
    }

    void routes() {
        server.Get("/api/queue", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto kind = parse_queue_kind(req.get_param_value("kind"));
                if (!kind) {
                    throw std::invalid_argument("kind must be key_annotation or pseudo_review, got '" +
                                                req.get_param_value("kind") + "'");
                }
                Json items = Json::array();
                for (const auto& q : session.queue(*kind)) items.push_back(queue_item_to_json(q));
                send_json(res, 200, items);
            });
        });

        server.Get(R"(/api/labels/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto id = req.matches[1].str();
                auto l = session.labels(id);
                if (!l) {
                    l = LabelSet{};
                    l->sample_id = id;
                }
                send_json(res, 200, labelset_to_json(*l));
            });
        });

        server.Put(R"(/api/labels/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto id = req.matches[1].str();
                const auto body = parse_body(req);
                if (body.contains("sample_id") && body["sample_id"] != id) {
                    throw ValidationError("body sample_id does not match the URL");
                }
                LabelSet l;
                l.sample_id = id;
                l.boxes = parse_boxes(body);
                l.revision = body.value("revision", std::int64_t{0});
                l.annotator = body.value("annotator", std::string{});
                const auto rev = session.annotate(l);
                send_json(res, 200, Json{{"sample_id", id}, {"revision", rev}});
            });
        });

        server.Post(R"(/api/review/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto id = req.matches[1].str();
                const auto body = parse_body(req);
                const auto action = parse_review_action(body.value("action", std::string{}));
                if (!action) throw std::invalid_argument("action must be approve, reject or edit");
                session.review(id, *action, parse_boxes(body));
                const auto st = session.snapshot();
                send_json(res, 200, Json{{"sample_id", id}, {"status", to_string(st.samples.at(id).status)}});
            });
        });

        server.Get(R"(/api/image/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto id = req.matches[1].str();
                const auto st = session.snapshot();
                auto it = st.samples.find(id);
                if (it == st.samples.end()) throw NotFound("unknown sample '" + id + "'");
                std::ifstream in(it->second.image_path, std::ios::binary);
                if (!in) throw NotFound("image for '" + id + "' is missing");
                std::ostringstream bytes;
                bytes << in.rdbuf();
                res.status = 200;
                res.set_content(bytes.str(), content_type_for(it->second.image_path).c_str());
            });
        });

        server.Get("/api/status", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                if (req.has_param("since")) {
                    std::size_t since = 0;
                    int wait_ms = 25000;
                    try {
                        since = std::stoul(req.get_param_value("since"));
                        if (req.has_param("wait_ms")) wait_ms = std::stoi(req.get_param_value("wait_ms"));
                    } catch (const std::exception&) {
                        throw std::invalid_argument("since and wait_ms must be integers");
                    }
                    session.wait_for_journal(since, std::chrono::milliseconds(std::clamp(wait_ms, 0, 60000)));
                }
                send_json(res, 200, session.status_json());
            });
        });
    }
};

AnnotationService::AnnotationService(Session& session) : impl_(std::make_unique<Impl>(session)) {}

AnnotationService::~AnnotationService() { stop(); }

int AnnotationService::bind(const std::string& host, int port) {
    if (port == 0) {
        port_ = impl_->server.bind_to_any_port(host);
        if (port_ < 0) throw IoError("cannot bind " + host);
    } else {
        if (!impl_->server.bind_to_port(host, port)) {
            throw IoError("port " + std::to_string(port) + " is busy");
        }
        port_ = port;
    }
    return port_;
}

void AnnotationService::start() {
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

void AnnotationService::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace gramsld
