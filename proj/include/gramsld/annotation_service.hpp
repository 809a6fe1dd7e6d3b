#pragma once

#include <memory>
#include <string>

#include "gramsld/session.hpp"

namespace gramsld {

// JSON API for the annotation and review front end:
//   GET  /api/queue?kind=key_annotation|pseudo_review
//   GET  /api/labels/{id}
//   PUT  /api/labels/{id}     {"boxes": [...], "revision": n}
//   POST /api/review/{id}     {"action": "approve"|"reject"|"edit", "boxes": [...]}
//   GET  /api/image/{id}
//   GET  /api/status[?since=n&wait_ms=t]
class AnnotationService {
public:
    explicit AnnotationService(Session& session);
    ~AnnotationService();

    AnnotationService(const AnnotationService&) = delete;
    AnnotationService& operator=(const AnnotationService&) = delete;

    // Port 0 picks a free port. Throws IoError when the port is busy.
    int bind(const std::string& host, int port);
    void start();  // serves on a background thread
    void stop();
    int port() const { return port_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
};

}  // namespace gramsld
