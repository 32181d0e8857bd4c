#include "cellokit/config.hpp"
#include "cellokit/error.hpp"
#include "cellokit/io.hpp"
#include "cellokit/pipeline.hpp"
#include "cellokit/synthetic.hpp"
#include "cellokit/trainer.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <unistd.h>

using namespace cellokit;

namespace {

struct Small {
    synthetic::SyntheticWorld world;
    ontology::OntologyGraph graph;
    config::RunConfig config;
};

Small small_world(std::size_t steps) {
    synthetic::SyntheticOptions o;
    o.n_types = 7;
    o.n_genes = 40;
    o.cells_per_type = 6;
    o.seed = 2;
    Small s{synthetic::gen_synthetic(o), {}, {}};
    s.graph = ontology::OntologyGraph::parse(s.world.ontology_text());
    s.config.model.embed_dim = 16;
    s.config.model.ffn_dim = 32;
    s.config.model.n_layers = 1;
    s.config.model.max_len = 16;
    s.config.model.seed = 4;
    s.config.train.total_steps = steps;
    s.config.train.warmup_steps = steps / 10;
    s.config.train.batch_size = 8;
    s.config.train.lr = 3e-3;
    s.config.train.seed = 4;
    return s;
}

std::filesystem::path temp_dir(const std::string& tag) {
    auto p = std::filesystem::temp_directory_path() / ("cellokit-unit-" + tag + "-" + std::to_string(::getpid()));
    std::filesystem::create_directories(p);
    return p;
}

} // namespace

TEST_CASE("learning-rate schedule") {
    trainer::TrainConfig c;
    c.lr = 1e-3;
    c.warmup_steps = 100;
    c.total_steps = 200;
    CHECK(trainer::lr_at(c, 0) == 0.0);
    CHECK(trainer::lr_at(c, 50) == doctest::Approx(5e-4).epsilon(1e-14));
    CHECK(trainer::lr_at(c, 100) == doctest::Approx(1e-3).epsilon(1e-14));
    CHECK(trainer::lr_at(c, 150) == doctest::Approx(5e-4).epsilon(1e-14));
    CHECK(trainer::lr_at(c, 200) == 0.0);
    CHECK(trainer::lr_at(c, 500) == 0.0);
    c.schedule = trainer::DecaySchedule::Constant;
    CHECK(trainer::lr_at(c, 150) == 1e-3);
    c.warmup_steps = 300;
    CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("AdamW: zero gradient gives decay-only shrinkage") {
    ad::Parameter p("w", 1, 2);
    p.value.data = {1.0, -2.0};
    std::vector<ad::Parameter*> ps{&p};
    trainer::AdamW opt(ps);
    trainer::TrainConfig c;
    c.weight_decay = 0.1;
    opt.step(c, 0.5);
    CHECK(p.value.data[0] == doctest::Approx(1.0 * (1.0 - 0.05)).epsilon(1e-7));
    CHECK(p.value.data[1] == doctest::Approx(-2.0 * (1.0 - 0.05)).epsilon(1e-7));
    CHECK(opt.steps_taken() == 1);
    for (double v : p.value.data) CHECK(static_cast<double>(static_cast<float>(v)) == v);
}

TEST_CASE("AdamW: first step moves each coordinate by about lr against the gradient") {
    ad::Parameter p("w", 1, 3);
    p.value.data = {0.0, 0.0, 0.0};
    p.grad.data = {2.0, -0.01, 0.0};
    std::vector<ad::Parameter*> ps{&p};
    trainer::AdamW opt(ps);
    trainer::TrainConfig c;
    c.weight_decay = 0.0;
    opt.step(c, 0.01);
    CHECK(p.value.data[0] == doctest::Approx(-0.01).epsilon(1e-5));
    CHECK(p.value.data[1] == doctest::Approx(0.01).epsilon(1e-4));
    CHECK(p.value.data[2] == 0.0);
}

TEST_CASE("non-finite gradients are rejected") {
    model::ModelConfig mc;
    mc.vocab_size = 10;
    mc.max_len = 8;
    mc.embed_dim = 8;
    mc.ffn_dim = 8;
    model::ModelState state(mc, {"A"});
    state.param("reg.bias").grad.data[0] = std::nan("");
    try {
        trainer::check_gradients(state);
        FAIL("expected NonFiniteGradient");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NonFiniteGradient);
        CHECK(std::string(e.what()).find("reg.bias") != std::string::npos);
    }
}

TEST_CASE("pretraining decreases the loss and is deterministic") {
    auto s = small_world(200);
    const auto a = pipeline::pretrain_corpus(s.graph, s.world.vocab, s.world.cells, s.config);
    REQUIRE(a.log.size() == 200);
    double head = 0.0, tail = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
        head += a.log[i].raw.total;
        tail += a.log[180 + i].raw.total;
    }
    CHECK(tail < head);
    for (const auto& row : a.log) CHECK(std::isfinite(row.raw.total));

    const auto b = pipeline::pretrain_corpus(s.graph, s.world.vocab, s.world.cells, s.config);
    CHECK(trainer::serialize_checkpoint(a.state) == trainer::serialize_checkpoint(b.state));
    CHECK(trainer::format_log_row(a.log.back()) == trainer::format_log_row(b.log.back()));

    s.config.train.seed = 5;
    const auto c = pipeline::pretrain_corpus(s.graph, s.world.vocab, s.world.cells, s.config);
    CHECK(trainer::serialize_checkpoint(a.state) != trainer::serialize_checkpoint(c.state));
}

TEST_CASE("log rows") {
    trainer::LogRow row;
    row.step = 3;
    row.lr = 0.5;
    row.logged = losses::combine(1.0, 0.25, 0.0, 0.5);
    const auto text = trainer::format_log_row(row);
    CHECK(text.rfind("3\t", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\t') == 6);
    const auto header = trainer::log_header();
    CHECK(std::count(header.begin(), header.end(), '\t') == 6);
}

TEST_CASE("checkpoint round trip and rejection") {
    auto s = small_world(5);
    const auto run = pipeline::pretrain_corpus(s.graph, s.world.vocab, s.world.cells, s.config);
    const auto bytes = trainer::serialize_checkpoint(run.state);
    const auto back = trainer::deserialize_checkpoint(bytes);
    CHECK(trainer::serialize_checkpoint(back) == bytes);
    CHECK(back.type_ids() == run.state.type_ids());
    CHECK(back.config().embed_dim == 16);
    for (const auto& p : run.state.parameters()) CHECK(back.param(p.name).value.data == p.value.data);

    auto kind_of = [](auto&& f) {
        try {
            f();
        } catch (const Error& e) {
            return e.kind();
        }
        return ErrorKind::Io;
    };
    CHECK(kind_of([&] { trainer::deserialize_checkpoint(std::string_view(bytes).substr(0, bytes.size() / 2)); }) ==
          ErrorKind::CorruptCheckpoint);
    CHECK(kind_of([&] { trainer::deserialize_checkpoint("NOTMAGIC"); }) == ErrorKind::CorruptCheckpoint);
    auto future = bytes;
    future[8] = 9;
    CHECK(kind_of([&] { trainer::deserialize_checkpoint(future); }) == ErrorKind::VersionMismatch);

    const auto dir = temp_dir("ckpt");
    trainer::save_checkpoint(run.state, dir / "m.ckpt");
    CHECK(io::read_file(dir / "m.ckpt") == bytes);
    trainer::CheckpointExpectation ok{s.world.vocab.size(), run.state.type_ids()};
    CHECK_NOTHROW(trainer::load_checkpoint(dir / "m.ckpt", ok));
    trainer::CheckpointExpectation wrong{s.world.vocab.size() + 1, run.state.type_ids()};
    try {
        trainer::load_checkpoint(dir / "m.ckpt", wrong);
        FAIL("expected VersionMismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::VersionMismatch);
        const std::string msg = e.what();
        CHECK(msg.find(std::to_string(s.world.vocab.size())) != std::string::npos);
        CHECK(msg.find(std::to_string(s.world.vocab.size() + 1)) != std::string::npos);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("mix_seed") {
    CHECK(trainer::mix_seed(1, 2) == trainer::mix_seed(1, 2));
    CHECK(trainer::mix_seed(1, 2) != trainer::mix_seed(2, 1));
    CHECK(trainer::mix_seed(0, 0) != trainer::mix_seed(0, 1));
}
