"""Experiment-config parser: grammar, typo safety, line-numbered errors."""

import pytest

from crossdistill.config import ConfigError, known_config_keys, load_config, parse_config_text

GOOD = """
# comment line
out_dir = runs/demo
data.gap = 0.25          # inline comment
data.seed = 7
data.n_source = 512
pretrain.epochs = 12
pretrain.lr = 2e-3
distill.loss = cmc
distill.milestones = 8, 10
finetune.mode = ft
finetune.beta1 = 0.8
sweep.gammas = 0, 0.5
sweep.seeds = 3
sweep.alpha_eval_modes = le, ft
tv.n_batches = 9
"""


class TestParsing:
    def test_good_config(self):
        cfg = parse_config_text(GOOD)
        assert cfg.out_dir == "runs/demo"
        assert cfg.data.gap == 0.25 and cfg.data.seed == 7 and cfg.data.n_source == 512
        assert cfg.pretrain.epochs == 12 and cfg.pretrain.lr == 2e-3
        assert cfg.distill.loss_kind == "cmc" and cfg.distill.milestones == (8, 10)
        assert cfg.finetune.eval_mode == "ft" and cfg.finetune.betas == (0.8, 0.999)
        assert cfg.sweep.gammas == (0.0, 0.5) and cfg.sweep.seeds == 3
        assert cfg.sweep.alpha_eval_modes == ("le", "ft")
        assert cfg.tv_n_batches == 9

    def test_defaults_without_file_entries(self):
        cfg = parse_config_text("")
        assert cfg.data.n_source == 20000 and cfg.data.n_paired == 2000
        assert cfg.pretrain.epochs == 100 and cfg.pretrain.batch_size == 64
        assert cfg.pretrain.milestones == (60, 70, 80)
        assert cfg.distill.tau == 0.5

    def test_unknown_key_reports_line(self):
        with pytest.raises(ConfigError, match=r"<config>:2: unknown key 'data.gamm'"):
            parse_config_text("\ndata.gamm = 0.5\n")

    def test_bad_value_reports_line(self):
        with pytest.raises(ConfigError, match=r"<config>:1: bad value"):
            parse_config_text("data.seed = banana")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate key"):
            parse_config_text("data.gap = 0.1\ndata.gap = 0.2\n")

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match="expected 'key = value'"):
            parse_config_text("data.gap 0.1")

    def test_semantic_validation_is_config_error(self):
        with pytest.raises(ConfigError, match="gap"):
            parse_config_text("data.gap = 1.5")

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "missing.cfg")

    def test_key_listing_contains_documented_sections(self):
        keys = known_config_keys()
        assert "data.gap" in keys and "sweep.alphas" in keys and "out_dir" in keys
