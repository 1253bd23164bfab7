import pytest

from agenttraffic.profiles import (
    LOCAL_EXCHANGE_OVERHEAD,
    ModelProfile,
    SizeDistribution,
    UnknownModel,
    all_profiles,
    default_mock_distribution,
    model_profile,
    reference_stats,
)


class TestRegistry:
    def test_table_row_values(self):
        mistral = model_profile("open-mistral-7b")
        assert mistral.company == "Mistral"
        assert mistral.context_length == 8192
        assert mistral.max_tokens == 4096
        assert mistral.temperature == 0.7
        assert mistral.top_p == 1.0

    def test_alias_lookup(self):
        assert model_profile("MistralAI").model_name == "open-mistral-7b"
        assert model_profile("Claude-3-sonnet-20240229").model_name == "claude-3-sonnet"
        assert model_profile("deepseek-r1:7b").model_name == "deepseek-r1"

    def test_all_named_variants_present(self):
        names = {p.model_name for p in all_profiles()}
        assert {
            "open-mistral-7b",
            "claude-3-sonnet",
            "llama3.1-70b",
            "llama3.2-11b-vision",
            "qwen-2.5-32b-groq",
            "gpt-3.5-turbo-instruct",
            "deepseek-r1",
            "gemini-pro",
            "gpt-4o",
        } <= names

    def test_unknown_model(self):
        with pytest.raises(UnknownModel):
            model_profile("gpt-99")

    def test_profile_validation(self):
        with pytest.raises(ValueError):
            ModelProfile("x", top_p=0.0)
        with pytest.raises(ValueError):
            ModelProfile("x", temperature=-0.1)
        with pytest.raises(ValueError):
            ModelProfile("x", context_length=100, max_tokens=200)

    def test_parameterless_profiles_allowed(self):
        gemini = model_profile("gemini-pro")
        assert gemini.parameter_count_b is None


class TestReferenceStats:
    def test_row_counts(self):
        assert len(reference_stats("local")["rows"]) == 7
        assert len(reference_stats("external")["rows"]) == 7

    def test_published_aggregate_on_external(self):
        agg = reference_stats("external")["published_aggregate"]
        assert agg["avg_bytes"] == 7593
        assert agg["sd_bytes"] == 369

    def test_bad_point(self):
        with pytest.raises(ValueError):
            reference_stats("wifi")


class TestMockDefaults:
    def test_mistral_row_minus_overhead(self):
        dist = default_mock_distribution("open-mistral-7b")
        row = reference_stats("local")["rows"]["MistralAI"]
        assert dist.mean == row["avg"] - LOCAL_EXCHANGE_OVERHEAD
        assert dist.sd == row["sd"]
        assert dist.maximum == row["max"] - LOCAL_EXCHANGE_OVERHEAD
        assert dist.minimum >= 0

    def test_model_without_row_gets_generic_default(self):
        dist = default_mock_distribution("gemini-pro")
        assert dist.minimum <= dist.mean <= dist.maximum
        assert dist.sd > 0

    def test_distribution_validation(self):
        with pytest.raises(ValueError):
            SizeDistribution(mean=10, sd=1, minimum=20, maximum=30)
        with pytest.raises(ValueError):
            SizeDistribution(mean=25, sd=-1, minimum=20, maximum=30)
