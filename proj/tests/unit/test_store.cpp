#include "labelkit/csv.hpp"
#include "labelkit/error.hpp"
#include "labelkit/store.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace labelkit;
using namespace labelkit::store;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::InvalidArgument;
}

struct Fixture {
    support::TempDir dir{"store"};
    std::shared_ptr<corpus::DatasetCatalog> catalog = std::make_shared<corpus::DatasetCatalog>(dir.path());

    Fixture() {
        catalog->add("wiki", "document_id,text\n"
                             "d1,A wolf lives in forests.\n"
                             "d1,It hunts at night.\n"
                             "d2,Stocks rose.\n"
                             "d2,Bonds fell.\n"
                             "d3,The river flooded.\n");
    }

    std::unique_ptr<WorkspaceStore> open() { return std::make_unique<WorkspaceStore>(dir.path(), catalog); }
};

LabelRecord rec(std::uint64_t seq, const std::string& e, LabelValue v, LabelSource s, std::uint64_t iter = 0) {
    LabelRecord r;
    r.seq = seq;
    r.element_id = e;
    r.category_id = "c1";
    r.value = v;
    r.source = s;
    r.iteration = iter;
    return r;
}

LabelCounts recount(const LabelMap& m) {
    LabelCounts c;
    for (const auto& [_, l] : m) {
        if (l.source != LabelSource::user) continue;
        (l.positive ? c.positives : c.negatives)++;
    }
    return c;
}

} // namespace

TEST_CASE("create workspace") {
    Fixture f;
    auto s = f.open();
    const auto w = s->create_workspace("wiki", "w1");
    CHECK(w.workspace_id == "w1");
    CHECK(w.categories.empty());
    CHECK(code_of([&] { s->create_workspace("missing", "w2"); }) == ErrorCode::UnknownDataset);
    CHECK(code_of([&] { s->create_workspace("wiki", "w1"); }) == ErrorCode::DuplicateWorkspace);
    CHECK(code_of([&] { s->workspace("nope"); }) == ErrorCode::UnknownWorkspace);
    CHECK(code_of([&] { s->create_workspace("wiki", "a/b"); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("categories resolve by id or name") {
    Fixture f;
    auto s = f.open();
    s->create_workspace("wiki", "w");
    const auto c = s->add_category("w", "Animals", "living things");
    CHECK(s->category("w", "Animals").category_id == c.category_id);
    CHECK(s->category("w", c.category_id).name == "Animals");
    CHECK(code_of([&] { s->add_category("w", "Animals"); }) == ErrorCode::DuplicateCategory);
    CHECK(code_of([&] { s->category("w", "Plants"); }) == ErrorCode::UnknownCategory);
}

TEST_CASE("set_label supersedes and retracts") {
    Fixture f;
    auto s = f.open();
    s->create_workspace("wiki", "w");
    s->add_category("w", "Animals");
    auto c = s->set_label("w", "Animals", "d1-0", LabelValue::positive);
    CHECK(c.positives == 1);
    CHECK(c.negatives == 0);
    c = s->set_label("w", "Animals", "d1-0", LabelValue::negative);
    CHECK(c.positives == 0);
    CHECK(c.negatives == 1);
    c = s->set_label("w", "Animals", "d1-0", LabelValue::none);
    CHECK(c.positives == 0);
    CHECK(c.negatives == 0);
    CHECK(c.user_labels_total == 3);
    CHECK(s->current_labels("w", "Animals").empty());
    CHECK(code_of([&] { s->set_label("w", "Animals", "d9-0", LabelValue::positive); }) == ErrorCode::UnknownElement);
    CHECK(code_of([&] { s->set_label("w", "Plants", "d1-0", LabelValue::positive); }) == ErrorCode::UnknownCategory);
    // Three label records; nothing was rewritten.
    CHECK(s->records("w").size() == 3);
}

TEST_CASE("current labels fold") {
    SUBCASE("user supersedes user") {
        CategoryLabels l;
        l.apply(rec(1, "e1", LabelValue::positive, LabelSource::user));
        l.apply(rec(2, "e1", LabelValue::negative, LabelSource::user));
        CHECK(l.current() == LabelMap{{"e1", {false, LabelSource::user}}});
    }
    SUBCASE("user beats weak") {
        CategoryLabels l;
        l.apply(rec(1, "e1", LabelValue::negative, LabelSource::weak_negative, 1));
        l.apply(rec(2, "e1", LabelValue::positive, LabelSource::user));
        CHECK(l.current() == LabelMap{{"e1", {true, LabelSource::user}}});
    }
    SUBCASE("empty log") {
        CategoryLabels l;
        CHECK(l.current().empty());
    }
    SUBCASE("a later weak draw does not override an earlier user label") {
        CategoryLabels l;
        l.apply(rec(1, "e1", LabelValue::positive, LabelSource::user));
        l.apply(rec(2, "e1", LabelValue::negative, LabelSource::weak_negative, 1));
        CHECK(l.current() == LabelMap{{"e1", {true, LabelSource::user}}});
    }
    SUBCASE("a new weak draw replaces the previous one") {
        CategoryLabels l;
        l.apply(rec(1, "e1", LabelValue::negative, LabelSource::weak_negative, 1));
        l.apply(rec(2, "e2", LabelValue::negative, LabelSource::weak_negative, 1));
        l.apply(rec(3, "e3", LabelValue::negative, LabelSource::weak_negative, 2));
        CHECK(l.current() == LabelMap{{"e3", {false, LabelSource::weak_negative}}});
    }
    SUBCASE("evaluation labels count toward retraining but not user counts") {
        CategoryLabels l;
        l.apply(rec(1, "e1", LabelValue::positive, LabelSource::evaluation));
        l.apply(rec(2, "e2", LabelValue::negative, LabelSource::weak_negative, 1));
        const auto c = l.counts();
        CHECK(c.positives == 0);
        CHECK(c.labels_since_last_train == 1);
        l.mark_trained(2);
        CHECK(l.counts().labels_since_last_train == 0);
    }
}

TEST_CASE("retractions after training count as new labels") {
    CategoryLabels l;
    l.apply(rec(1, "e1", LabelValue::positive, LabelSource::user));
    l.mark_trained(1);
    l.apply(rec(2, "e1", LabelValue::none, LabelSource::user));
    CHECK(l.counts().labels_since_last_train == 1);
}

TEST_CASE("counts always agree with current labels") {
    Fixture f;
    auto s = f.open();
    s->create_workspace("wiki", "w");
    s->add_category("w", "A");
    const std::vector<std::string> ids{"d1-0", "d1-1", "d2-0", "d2-1", "d3-0"};
    std::mt19937_64 gen(9);
    for (int i = 0; i < 200; ++i) {
        const auto& e = ids[gen() % ids.size()];
        const auto v = static_cast<LabelValue>(gen() % 3);
        const auto src = gen() % 4 == 0 ? LabelSource::weak_negative
                                        : (gen() % 5 == 0 ? LabelSource::evaluation : LabelSource::user);
        s->set_label("w", "A", e, src == LabelSource::weak_negative ? LabelValue::negative : v, src, i / 20 + 1);
        const auto snap = s->snapshot("w", "A");
        const auto expect = recount(snap.labels);
        CHECK(snap.counts.positives == expect.positives);
        CHECK(snap.counts.negatives == expect.negatives);
    }
}

TEST_CASE("state replays identically after restart") {
    Fixture f;
    LabelMap before;
    LabelCounts counts_before;
    std::uint64_t seq_before = 0;
    {
        auto s = f.open();
        s->create_workspace("wiki", "w");
        s->add_category("w", "A");
        s->add_category("w", "B");
        s->set_label("w", "A", "d1-0", LabelValue::positive);
        s->set_label("w", "A", "d2-0", LabelValue::negative);
        s->append_labels("w", "A", {{"d2-1", LabelValue::negative}, {"d3-0", LabelValue::negative}},
                         LabelSource::weak_negative, 1);
        s->mark_trained("w", "A", s->seq("w"));
        s->set_label("w", "A", "d1-1", LabelValue::positive);
        s->set_label("w", "B", "d3-0", LabelValue::positive);
        s->set_label("w", "A", "d2-0", LabelValue::none);
        before = s->current_labels("w", "A");
        counts_before = s->counts("w", "A");
        seq_before = s->seq("w");
    }
    auto s = f.open();
    CHECK(s->current_labels("w", "A") == before);
    CHECK(s->counts("w", "A") == counts_before);
    CHECK(s->seq("w") == seq_before);
    CHECK(s->workspace("w").categories.size() == 2);
    CHECK(s->counts("w", "A").labels_since_last_train == 2);
}

TEST_CASE("a torn final log line is ignored on replay") {
    Fixture f;
    {
        auto s = f.open();
        s->create_workspace("wiki", "w");
        s->add_category("w", "A");
        s->set_label("w", "A", "d1-0", LabelValue::positive);
    }
    {
        std::FILE* fp = std::fopen((f.dir.path() / "workspaces" / "w" / "log.jsonl").c_str(), "ab");
        std::fputs("{\"kind\":\"label\",\"seq\":9", fp);
        std::fclose(fp);
    }
    auto s = f.open();
    CHECK(s->current_labels("w", "A").size() == 1);
}

TEST_CASE("import labels") {
    Fixture f;
    auto s = f.open();
    s->create_workspace("wiki", "w");
    s->add_category("w", "Animals");
    SUBCASE("valid rows apply and bad rows are reported") {
        const auto r = s->import_labels("w", "element_id,category_name,label\n"
                                             "d1-0,Animals,true\n"
                                             "d2-0,Animals,false\n"
                                             "d9-9,Animals,true\n"
                                             "d1-1,Animals,TRUE\n");
        CHECK(r.applied == 3);
        REQUIRE(r.errors.size() == 1);
        CHECK(r.errors[0].row == 4);
        CHECK(r.counts.at("Animals").positives == 2);
        CHECK(r.counts.at("Animals").negatives == 1);
    }
    SUBCASE("unknown category is created") {
        const auto r = s->import_labels("w", "doc_id,position,category_name,label\nd1,0,Habitat,true\n");
        CHECK(r.applied == 1);
        CHECK(r.created_categories == std::vector<std::string>{"Habitat"});
        CHECK(s->current_labels("w", "Habitat").at("d1-0").positive);
    }
    SUBCASE("missing columns") {
        CHECK(code_of([&] { s->import_labels("w", ""); }) == ErrorCode::MissingColumn);
        CHECK(code_of([&] { s->import_labels("w", "element_id,label\nd1-0,true\n"); }) == ErrorCode::MissingColumn);
    }
}

TEST_CASE("export keeps user labels only and round-trips") {
    Fixture f;
    auto s = f.open();
    s->create_workspace("wiki", "w");
    s->add_category("w", "Animals");
    s->set_label("w", "Animals", "d1-0", LabelValue::positive);
    s->set_label("w", "Animals", "d2-0", LabelValue::negative);
    s->append_labels("w", "Animals", {{"d2-1", LabelValue::negative}}, LabelSource::weak_negative, 1);
    const auto csv_text = s->export_labels("w");
    const auto rows = csv::parse(csv_text);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == csv::Row{"workspace_id", "category_name", "doc_id", "element_id", "text", "label", "source"});
    CHECK(rows[1][3] == "d1-0");
    CHECK(rows[1][4] == "A wolf lives in forests.");

    s->create_workspace("wiki", "fresh");
    const auto r = s->import_labels("fresh", csv_text);
    CHECK(r.errors.empty());
    LabelMap user_only;
    for (const auto& [id, l] : s->current_labels("w", "Animals")) {
        if (l.source == LabelSource::user) user_only.emplace(id, l);
    }
    CHECK(s->current_labels("fresh", "Animals") == user_only);
}
