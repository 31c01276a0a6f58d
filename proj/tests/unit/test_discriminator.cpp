#include <gtest/gtest.h>

#include <dcot/dcot.hpp>

using namespace dcot;

namespace {

std::string random_question(SplitMix64& rng)
{
    static const std::vector<std::string> words = {"rank", "det", "matrix", "identity", "trace", "zero", "vector",
                                                   "pivot", "column", "row", "2", "3", "4", "of", "the", "what",
                                                   "is", "inverse", "+", "*"};
    std::string q;
    const auto n = 1 + rng.below(7);
    for (std::uint64_t i = 0; i < n; ++i)
        q += (i ? " " : "") + words[rng.below(words.size())];
    return q;
}

} // namespace

TEST(FactConfidence, EmptyStore)
{
    const FactStore store;
    EXPECT_EQ(fact_confidence("what is 2", store), 0.0);
    const auto v = discriminate("what is 2", store, DCoTConfig{});
    EXPECT_EQ(v.decision, Decision::needs_cot);
}

TEST(FactConfidence, ExactMatchShortCircuits)
{
    FactStore store;
    store.add("What is the rank of the 3 by 3 identity matrix?", "3");
    store.add("What is 2 plus 3?", "5");
    EXPECT_EQ(fact_confidence("what is  the rank of the 3 by 3 identity MATRIX", store), 1.0);
}

TEST(FactConfidence, HandWorkedBm25TwoOfFourTerms)
{
    // One fact, four distinct terms, query shares two of them.
    // N = 1, df = 1: idf = ln(1 + 0.5/1.5) = ln(4/3); |d| = avgdl so each
    // matched term contributes idf * 1 * 2.2 / (1 + 1.2) = ln(4/3).
    // s = 2 ln(4/3) = 0.5753641449035617, p = s / (s + 2) = 0.22341079262214666
    FactStore store;
    store.add("alpha beta gamma delta", "x");
    EXPECT_NEAR(store.score("alpha beta epsilon zeta", 0), 0.5753641449035617, 1e-12);
    EXPECT_NEAR(fact_confidence("alpha beta epsilon zeta", store), 0.22341079262214666, 1e-12);
}

TEST(FactConfidence, MonotoneUnderInsertion)
{
    SplitMix64 rng(101);
    for (int trial = 0; trial < 40; ++trial) {
        FactStore store;
        std::vector<std::string> queries;
        for (int i = 0; i < 10; ++i)
            queries.push_back(random_question(rng));
        std::vector<double> last(queries.size(), 0.0);
        for (int f = 0; f < 12; ++f) {
            store.add(random_question(rng), "a");
            for (std::size_t q = 0; q < queries.size(); ++q) {
                const double p = fact_confidence(queries[q], store);
                EXPECT_GE(p, last[q]) << "trial " << trial << " fact " << f << " query '" << queries[q] << "'";
                EXPECT_GE(p, 0.0);
                EXPECT_LE(p, 1.0);
                last[q] = p;
            }
        }
    }
}

TEST(FactStoreTest, DocumentFrequencies)
{
    FactStore store;
    store.add("rank of a matrix", "1");
    store.add("rank of the identity", "2");
    EXPECT_EQ(store.document_frequency("rank"), 2);
    EXPECT_EQ(store.document_frequency("identity"), 1);
    EXPECT_EQ(store.document_frequency("missing"), 0);
}

TEST(FactCorpus, ParsesTabSeparatedLines)
{
    const FactStore s = parse_fact_corpus("q one\ta1\n\nq two\ta2\r\n");
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s.facts()[1].answer, "a2");
    EXPECT_THROW(parse_fact_corpus("no tab here\n"), ParseError);
    EXPECT_EQ(read_fact_corpus(std::string(DCOT_DATA_DIR) + "/facts.tsv").size(), 8u);
}

TEST(Complexity, Examples)
{
    EXPECT_EQ(complexity_score("what is 2"), 0);
    EXPECT_EQ(complexity_score("2+3"), 1);
    EXPECT_EQ(complexity_score("det (L*U*inv(L)*inv(U))"), 5);
}

TEST(Complexity, CountingRule)
{
    EXPECT_EQ(complexity_score("-3"), 0);                       // unary minus
    EXPECT_EQ(complexity_score("2 * -3"), 1);
    EXPECT_EQ(complexity_score("[[1,2],[3,4]]"), 3);            // depth 2 + one literal
    EXPECT_EQ(complexity_score("[1,2] + [3,4]"), 1 + 1 + 2);
    EXPECT_EQ(complexity_score("a b c d e f g h i j k"), 2);    // free text: ceil(11/10)
    EXPECT_EQ(complexity_score(""), 0);
}

TEST(Decide, PaperCaseRule)
{
    const DCoTConfig cfg;
    EXPECT_EQ(decide(0.9, 2, cfg), Decision::direct);
    EXPECT_EQ(decide(0.9, 4, cfg), Decision::needs_cot);
    EXPECT_EQ(decide(0.84999, 0, cfg), Decision::needs_cot);
    EXPECT_EQ(decide(0.85, 3, cfg), Decision::direct);
}

TEST(Decide, ExhaustiveGrid)
{
    const DCoTConfig cfg;
    for (double p : {0.0, 0.5, 0.84, 0.84999, 0.85, 0.850001, 0.9, 1.0})
        for (int c = 0; c <= 8; ++c)
            EXPECT_EQ(decide(p, c, cfg) == Decision::direct, p >= 0.85 && c <= 3) << p << " " << c;
}

TEST(Discriminate, DirectAnswerFromBestFact)
{
    FactStore store;
    store.add("What is 2 plus 3?", "5");
    const DCoTConfig cfg;
    const auto v = discriminate("what is 2 plus 3", store, cfg);
    EXPECT_EQ(v.decision, Decision::direct);
    EXPECT_EQ(v.answer, "5");
    const auto again = discriminate("what is 2 plus 3", store, cfg);
    EXPECT_EQ(again.p_fact, v.p_fact);
    EXPECT_EQ(again.c_comp, v.c_comp);
    // right fact, but too structured to answer directly
    const auto complex = discriminate("What is 2 plus 3? (2+3)*(4-1)/[1,2]", store, cfg);
    EXPECT_EQ(complex.decision, Decision::needs_cot);
}

TEST(Discriminate, VerdictMatchesRuleOnRandomQueries)
{
    SplitMix64 rng(55);
    FactStore store;
    for (int i = 0; i < 15; ++i)
        store.add(random_question(rng), "ans" + std::to_string(i));
    const DCoTConfig cfg;
    for (int i = 0; i < 500; ++i) {
        const std::string q = random_question(rng);
        const auto v = discriminate(q, store, cfg);
        EXPECT_EQ(v.decision == Decision::direct, v.p_fact >= 0.85 && v.c_comp <= 3);
        EXPECT_EQ(v.p_fact, fact_confidence(q, store));
        EXPECT_EQ(v.c_comp, complexity_score(q));
    }
}
