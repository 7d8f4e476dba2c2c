/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <doctest.h>

#include <vetgate/hostlist.hpp>

#include "oracles/hostlist_oracle.hpp"

#include <random>

using vetgate::hostlist::MalformedHostlist;
namespace hl = vetgate::hostlist;

using Names = std::vector<std::string>;

TEST_SUITE("hostlist")
{
    TEST_CASE("expand mixed list")
    {
        CHECK(hl::expand("nid[001-003],nid007") == Names {"nid001", "nid002", "nid003", "nid007"});
        CHECK(hl::expand("nid001") == Names {"nid001"});
        CHECK(hl::expand("nid[001-004]").size() == 4);
    }

    TEST_CASE("expand padding follows the lower bound")
    {
        CHECK(hl::expand("n[8-10]") == Names {"n8", "n9", "n10"});
        CHECK(hl::expand("n[08-10]") == Names {"n08", "n09", "n10"});
        CHECK(hl::expand("n[1,3,5-6]") == Names {"n1", "n3", "n5", "n6"});
    }

    TEST_CASE("expand cartesian product and suffixes")
    {
        CHECK(hl::expand("r[1-2]n[1-2]") == Names {"r1n1", "r1n2", "r2n1", "r2n2"});
        CHECK(hl::expand("nid[01-02]-ib") == Names {"nid01-ib", "nid02-ib"});
        CHECK(hl::expand(" login , nid[1-2] ") == Names {"login", "nid1", "nid2"});
    }

    TEST_CASE("malformed expressions")
    {
        CHECK_THROWS_AS(hl::expand("nid[003-001]"), MalformedHostlist);
        CHECK_THROWS_AS(hl::expand(""), MalformedHostlist);
        CHECK_THROWS_AS(hl::expand("nid[001-003"), MalformedHostlist);
        CHECK_THROWS_AS(hl::expand("nid001]"), MalformedHostlist);
        CHECK_THROWS_AS(hl::expand("nid[[1]]"), MalformedHostlist);
        CHECK_THROWS_AS(hl::expand("nid[]"), MalformedHostlist);
        CHECK_THROWS_AS(hl::expand("nid[a-b]"), MalformedHostlist);
        CHECK_THROWS_AS(hl::expand("a,,b"), MalformedHostlist);
        CHECK_THROWS_AS(hl::expand("a,"), MalformedHostlist);
        CHECK_THROWS_AS(hl::expand("nid[1-2000000]"), MalformedHostlist);
        CHECK_THROWS_AS(hl::expand("ni d1"), MalformedHostlist);
    }

    TEST_CASE("compress")
    {
        CHECK(hl::compress(Names {"nid017"}) == "nid017");
        CHECK(hl::compress(Names {"nid001", "nid002", "nid003"}) == "nid[001-003]");
        CHECK(hl::compress(Names {"nid007", "nid002", "nid001", "nid003", "nid002"}) == "nid[001-003,007]");
        CHECK(hl::compress(Names {"nid9", "nid10"}) == "nid9,nid10");
        CHECK(hl::compress(Names {"login", "nid1", "nid2"}) == "login,nid[1-2]");
        CHECK(hl::compress(Names {}).empty());
        CHECK_THROWS_AS(hl::compress(Names {"bad,name"}), MalformedHostlist);
    }

    TEST_CASE("implementation agrees with the standalone oracle")
    {
        for (const char *expr : {"nid[001-003],nid007", "a[1-3]b[01-02]", "x1,x[2-4],y", "gpu2n[005-010]",
                                 "n[8-10]", "n[099-101]", "001,002", "r[1-2]n[1-2]-ib"})
        {
            auto ours = hl::expand(expr);
            auto ref  = oracle::hostlist::expand(expr);
            REQUIRE(ref.has_value());
            CHECK(ours == *ref);
            CHECK(hl::compress(ours) == oracle::hostlist::compress(ours));
            CHECK(hl::expand(hl::compress(ours)) == oracle::hostlist::sorted_unique(ours));
        }
        for (const char *bad : {"nid[3-1]", "nid[", "n]", "n[1-]", "n[,1]"})
        {
            CHECK_FALSE(oracle::hostlist::expand(bad).has_value());
            CHECK_THROWS_AS(hl::expand(bad), MalformedHostlist);
        }
    }

    TEST_CASE("random name sets round-trip")
    {
        std::mt19937 rng(7);
        const Names prefixes {"nid", "gpu2n", "x", ""};
        for (int round = 0; round < 500; ++round)
        {
            Names names;
            int count = std::uniform_int_distribution<int>(1, 12)(rng);
            for (int i = 0; i < count; ++i)
            {
                auto prefix = prefixes[rng() % prefixes.size()];
                int width   = 1 + static_cast<int>(rng() % 4);
                auto number = rng() % 30;
                auto digits = oracle::hostlist::zero_pad(number, width);
                if (digits.size() > static_cast<std::size_t>(width))
                {
                    continue;
                }
                names.push_back(prefix + digits);
            }
            if (rng() % 5 == 0)
            {
                names.push_back("login");
            }
            if (names.empty())
            {
                continue;
            }
            auto text = hl::compress(names);
            CHECK(text == oracle::hostlist::compress(names));
            CHECK(hl::expand(text) == oracle::hostlist::sorted_unique(names));
            CHECK(hl::canonical_order(names) == oracle::hostlist::sorted_unique(names));
        }
    }
}
