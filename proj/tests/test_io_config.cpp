#include "cellokit/config.hpp"
#include "cellokit/error.hpp"
#include "cellokit/io.hpp"
#include "cellokit/synthetic.hpp"

#include <doctest.h>

#include <filesystem>
#include <unistd.h>

using namespace cellokit;

namespace {

const std::string header = "cell_id\tcell_type\tbatch\tdonor\ttissue\n";

tokenizer::GeneVocab abc() { return tokenizer::GeneVocab({"A", "B", "C"}); }

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::Io;
}

} // namespace

TEST_CASE("corpus parsing") {
    const auto v = abc();
    const std::string meta = header + "c1\tT\tb1\td\tx\nc2\tU\tb2\td\tx\nc3\tT\tb1\td\tx\n";
    const auto c = io::parse_corpus("c2\tB\t4\nc1\tA\t1\nc2\tZ\t9\nc1\tC\t0\n", meta, v);
    REQUIRE(c.profiles.size() == 3);
    CHECK(c.profiles[0].cell_id == "c2");
    CHECK(c.profiles[0].cell_type == "U");
    CHECK(c.profiles[0].batch == "b2");
    CHECK(c.profiles[1].counts.size() == 2);
    CHECK(c.profiles[2].cell_id == "c3");
    CHECK(c.profiles[2].counts.empty());
    CHECK(c.unknown_gene_entries == 1);
    CHECK(c.warnings.size() == 1);

    CHECK(kind_of([&] { io::parse_corpus("c9\tA\t1\n", meta, v); }) == ErrorKind::MissingMetadata);
    CHECK(kind_of([&] { io::parse_corpus("c1\tA\t1\nc1\tA\t2\n", meta, v); }) == ErrorKind::DuplicateCell);
    CHECK(kind_of([&] { io::parse_corpus("", meta + "c1\tT\tb\td\tx\n", v); }) == ErrorKind::DuplicateCell);
    CHECK(kind_of([&] { io::parse_corpus("c1\tA\t1\n", header + "c1\tT\n", v); }) != ErrorKind::Io);
    CHECK(kind_of([&] { io::parse_corpus("c1\tA\n", meta, v); }) == ErrorKind::MalformedLine);
    CHECK(kind_of([&] { io::parse_corpus("c1\tA\t1.5\n", meta, v); }) == ErrorKind::MalformedLine);
    try {
        io::parse_corpus("c1\tA\t1\nc1\tB\t-3\n", meta, v);
        FAIL("expected NegativeCount");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NegativeCount);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }

    const auto empty = io::parse_corpus("", header, v);
    CHECK(empty.profiles.empty());
    CHECK(empty.warnings == std::vector<std::string>{"corpus is empty"});
}

TEST_CASE("expression and metadata round trip is byte-stable") {
    synthetic::SyntheticOptions o;
    o.n_types = 5;
    o.n_genes = 30;
    o.cells_per_type = 20;
    o.batch_effect_strength = 0.3;
    o.seed = 12;
    const auto w = synthetic::gen_synthetic(o);
    REQUIRE(w.cells.size() == 100);
    const auto expr = io::format_expression(w.cells, w.vocab);
    const auto meta = io::format_metadata(io::metadata_of(w.cells));
    const auto back = io::parse_corpus(expr, meta, w.vocab);
    CHECK(io::format_expression(back.profiles, w.vocab) == expr);
    CHECK(io::format_metadata(io::metadata_of(back.profiles)) == meta);

    const auto dir = std::filesystem::temp_directory_path() / ("cellokit-unit-io-" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    io::write_atomic(dir / "e.tsv", expr);
    io::write_atomic(dir / "m.tsv", meta);
    CHECK(io::format_expression(io::read_corpus(dir / "e.tsv", dir / "m.tsv", w.vocab).profiles, w.vocab) == expr);
    CHECK(kind_of([&] { io::read_file(dir / "absent.tsv"); }) == ErrorKind::Io);
    std::filesystem::remove_all(dir);
}

TEST_CASE("embeddings round trip exactly") {
    ad::Matrix m(2, 3);
    m.data = {0.1, -1.0 / 3.0, 1e-300, 2.5, 0.0, -7.25};
    const auto [ids, back] = io::parse_embeddings(io::format_embeddings({"x", "y"}, m));
    CHECK(ids == std::vector<std::string>{"x", "y"});
    CHECK(back.data == m.data);
    CHECK(kind_of([] { io::parse_embeddings("x\t1\t2\ny\t1\n"); }) != ErrorKind::Io);
}

TEST_CASE("small helpers") {
    CHECK(io::split_tabs("a\t\tb") == std::vector<std::string>{"a", "", "b"});
    CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(kind_of([] { io::require_plain_id("a\tb", "id"); }) == ErrorKind::InvalidArgument);
    io::Manifest m;
    m.set("b", "2");
    m.set("a", "1");
    CHECK(m.to_text() == "a\t1\nb\t2\n");
}

TEST_CASE("run config") {
    config::RunConfig c;
    const auto pairs = config::parse_pairs("# comment\nlr = 0.01\n\nembed_dim=48  # trailing\n");
    REQUIRE(pairs.size() == 2);
    for (const auto& [k, v] : pairs) config::set_value(c, k, v);
    CHECK(c.train.lr == 0.01);
    CHECK(c.model.embed_dim == 48);

    // Later assignments win, which is how command-line overrides take precedence over the file.
    config::set_value(c, "lr", "0.02");
    CHECK(config::get_value(c, "lr") == "0.02");

    config::set_value(c, "seed", "17");
    CHECK(c.model.seed == 17);
    CHECK(c.train.seed == 17);

    CHECK(kind_of([&] { config::set_value(c, "no_such_key", "1"); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([&] { config::set_value(c, "lr", "fast"); }) == ErrorKind::InvalidArgument);

    // Every key survives snapshot and reparse.
    config::RunConfig d;
    for (const auto& [k, v] : config::parse_pairs(config::snapshot(c))) config::set_value(d, k, v);
    CHECK(config::snapshot(d) == config::snapshot(c));
    for (const auto& key : config::known_keys()) CHECK(config::get_value(d, key) == config::get_value(c, key));
}
