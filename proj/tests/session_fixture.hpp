#pragma once

#include <memory>

#include "gramsld/session.hpp"
#include "test_util.hpp"

namespace testutil {

// Session over n hand-made samples "k0".."k{n-1}" waiting for annotation and
// "u0".."u{n-1}" self-labeled, 64x48 each.
struct SessionFixture {
    TempDir dir{"session"};
    std::unique_ptr<gramsld::Session> session;

    explicit SessionFixture(int n = 5, bool review = false) {
        gramsld::RunConfig cfg;
        cfg.work_dir = dir / "work";
        cfg.review = review;
        session = std::make_unique<gramsld::Session>(cfg);
        write_text(dir / "img.png", "not really a png");
        session->mutate([&](gramsld::RunState& st) {
            for (int i = 0; i < n; ++i) {
                for (auto [prefix, status] : {std::pair{"k", gramsld::SampleStatus::key_pending_annotation},
                                              std::pair{"u", gramsld::SampleStatus::labeled_self}}) {
                    gramsld::Sample s;
                    s.id = prefix + std::to_string(i);
                    s.image_path = dir / "img.png";
                    s.width = 64;
                    s.height = 48;
                    s.status = status;
                    s.cluster_id = i % 2;
                    st.samples[s.id] = s;
                    session->store().register_sample(s.id, 64, 48);
                }
            }
        });
        for (int i = 0; i < n; ++i) {
            session->store().write_labels({"u" + std::to_string(i), {box(1, 1, 9, 9, "car", 0.97)}, 0, "self"});
        }
    }

    gramsld::Session& operator*() { return *session; }
    gramsld::Session* operator->() { return session.get(); }
};

}  // namespace testutil
