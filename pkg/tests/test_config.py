"""Tests for simulation configuration parsing and derived quantities."""

import dataclasses

import pytest

from qrfh.config import SimConfig, allocate_rbs_paper, full_scale, parse_config
from qrfh.errors import ConfigError


class TestDefaults:
    def test_desk_scale_dimensions(self):
        cfg = SimConfig()
        assert (cfg.n_fft, cfg.cp_len, cfg.n_active) == (512, 36, 432)
        assert cfg.n_r == 64
        assert cfg.users == 4
        assert cfg.rb_allocation == (8, 8, 8, 8)
        assert cfg.modulation_order == 64
        assert cfg.channel_profile == "tdla30-desk"
        assert cfg.compressor == "qr"
        assert cfg.l_u == "rank"
        assert cfg.quantizer_bits == 15

    def test_sample_rate(self):
        assert SimConfig().sample_rate_hz == pytest.approx(15.36e6)

    def test_grid_object(self):
        grid = SimConfig().grid()
        assert grid.symbol_len == 548
        assert grid.n_active == 432

    def test_allocations_pack_from_rb_zero(self):
        allocs = SimConfig().allocations()
        assert [a.user_id for a in allocs] == [0, 1, 2, 3]
        assert [a.rb_start for a in allocs] == [0, 8, 16, 24]
        assert all(a.n_subcarriers == 96 for a in allocs)

    def test_unequal_allocation_offsets(self):
        cfg = SimConfig(users=3, rb_allocation=(4, 10, 6))
        assert [a.rb_start for a in cfg.allocations()] == [0, 4, 14]

    def test_channel_rank_counts_distinct_delays(self):
        """The desk channel resolves to 11 distinct sample delays, which is
        the per-user rank of a noiseless receive matrix."""
        cfg = SimConfig()
        assert cfg.channel_rank() == 11
        assert cfg.resolved_l_u() == 11
        assert dataclasses.replace(cfg, l_u=7).resolved_l_u() == 7


class TestValidation:
    def test_unknown_compressor(self):
        with pytest.raises(ConfigError, match="compressor must be one of"):
            SimConfig(compressor="zip")

    def test_user_count_must_match_allocation(self):
        with pytest.raises(ConfigError,
                           match="rb_allocation lists 4 users, config says 3"):
            SimConfig(users=3)

    def test_trials_positive(self):
        with pytest.raises(ConfigError, match="trials must be >= 1"):
            SimConfig(trials=0)

    def test_basis_size_string_must_be_rank(self):
        with pytest.raises(ConfigError, match="positive int or 'rank'"):
            SimConfig(l_u="auto")

    def test_basis_size_positive(self):
        with pytest.raises(ConfigError, match="l_u must be >= 1"):
            SimConfig(l_u=0)

    def test_allocation_must_fit_grid(self):
        """Desk grid has 432/12 = 36 resource blocks."""
        with pytest.raises(ConfigError, match="40 RBs exceed the 36-RB grid"):
            SimConfig(rb_allocation=(10, 10, 10, 10))


class TestReferenceAllocations:
    def test_eight_user_split(self):
        rbs = allocate_rbs_paper(8)
        assert rbs == (26, 28, 30, 32, 34, 36, 38, 40)
        assert sum(rbs) == 264

    def test_twelve_user_split(self):
        rbs = allocate_rbs_paper(12)
        assert rbs == (10, 12, 14, 16, 18, 20, 22, 24, 26, 28, 30, 32)
        assert sum(rbs) == 252

    def test_other_counts_rejected(self):
        with pytest.raises(ConfigError, match="8 or 12 users"):
            allocate_rbs_paper(6)


class TestFullScale:
    def test_wideband_dimensions(self):
        cfg = full_scale(SimConfig())
        assert (cfg.n_fft, cfg.cp_len, cfg.n_active) == (4096, 288, 3276)
        assert cfg.n_r == 256
        assert cfg.channel_profile == "tdla30"
        assert cfg.sample_rate_hz == pytest.approx(122.88e6)
        assert cfg.grid().symbol_len == 4384

    def test_users_default_to_eight(self):
        """The desk default of 4 users has no reference allocation."""
        cfg = full_scale(SimConfig())
        assert cfg.users == 8
        assert cfg.rb_allocation == allocate_rbs_paper(8)

    def test_users_preserved_when_already_referenced(self):
        base = SimConfig(users=12, rb_allocation=(2,) * 12)
        cfg = full_scale(base)
        assert cfg.users == 12
        assert cfg.rb_allocation == allocate_rbs_paper(12)

    def test_explicit_user_count(self):
        cfg = full_scale(SimConfig(), users=12)
        assert cfg.users == 12
        with pytest.raises(ConfigError, match="must be 8 or 12"):
            full_scale(SimConfig(), users=5)

    def test_sweep_settings_survive(self):
        base = SimConfig(trials=7, seed=99, snr_db=(1.0, 3.0),
                         compressor="none")
        cfg = full_scale(base)
        assert (cfg.trials, cfg.seed) == (7, 99)
        assert cfg.snr_db == (1.0, 3.0)
        assert cfg.compressor == "none"

    def test_rank_matches_desk_scale(self):
        """7x delay stretch at 1/8 the rate: same distinct-delay count."""
        assert full_scale(SimConfig()).channel_rank() == 11


class TestParseConfig:
    def _write(self, tmp_path, text):
        path = tmp_path / "sim.cfg"
        path.write_text(text)
        return path

    def test_flat_file_with_comments(self, tmp_path):
        path = self._write(tmp_path, """
            # Monte-Carlo setup
            trials = 25
            seed = 7          # inline comment
            snr_db = -2, 0, 2
            modulation_order = 16
            rho = 0.5
            compressor = svd-baseline
            l_u = 9
        """)
        cfg = parse_config(path)
        assert cfg.trials == 25
        assert cfg.seed == 7
        assert cfg.snr_db == (-2.0, 0.0, 2.0)
        assert cfg.modulation_order == 16
        assert cfg.rho == 0.5
        assert cfg.compressor == "svd-baseline"
        assert cfg.l_u == 9

    def test_rank_keyword_for_basis_size(self, tmp_path):
        path = self._write(tmp_path, "l_u = rank\n")
        assert parse_config(path).l_u == "rank"

    def test_rb_allocation_list(self, tmp_path):
        path = self._write(tmp_path, "users = 2\nrb_allocation = 10 14\n")
        cfg = parse_config(path)
        assert cfg.users == 2
        assert cfg.rb_allocation == (10, 14)

    def test_rb_allocation_paper_keyword(self, tmp_path):
        path = self._write(
            tmp_path, "users = 12\nrb_allocation = paper\n"
                      "n_active = 3276\nn_fft = 4096\ncp_len = 288\n")
        cfg = parse_config(path)
        assert cfg.rb_allocation == allocate_rbs_paper(12)

    def test_unknown_key_names_file_and_line(self, tmp_path):
        path = self._write(tmp_path, "trials = 5\nantennas = 64\n")
        with pytest.raises(ConfigError, match=r"sim\.cfg:2: unknown config key 'antennas'"):
            parse_config(path)

    def test_missing_equals_sign(self, tmp_path):
        path = self._write(tmp_path, "trials 5\n")
        with pytest.raises(ConfigError, match="expected 'key = value'"):
            parse_config(path)

    def test_bad_value_names_key(self, tmp_path):
        path = self._write(tmp_path, "trials = soon\n")
        with pytest.raises(ConfigError, match=r"sim\.cfg:1: bad value for trials"):
            parse_config(path)

    def test_overrides_take_precedence(self, tmp_path):
        path = self._write(tmp_path, "trials = 5\nseed = 1\n")
        cfg = parse_config(path, overrides={"trials": 50})
        assert cfg.trials == 50
        assert cfg.seed == 1

    def test_full_overlay_on_plain_file(self, tmp_path):
        """full=True turns any desk file into the wideband system."""
        path = self._write(tmp_path, "trials = 3\n")
        cfg = parse_config(path, full=True)
        assert cfg.n_r == 256
        assert cfg.users == 8
        assert cfg.rb_allocation == allocate_rbs_paper(8)
        assert cfg.trials == 3

    def test_full_overlay_respects_declared_users(self, tmp_path):
        """A file written for the wideband system parses with full=True even
        though its allocation would overflow the desk grid."""
        path = self._write(tmp_path, "users = 12\nrb_allocation = paper\n")
        cfg = parse_config(path, full=True)
        assert cfg.users == 12
        assert cfg.rb_allocation == allocate_rbs_paper(12)
        assert cfg.n_fft == 4096

    def test_full_overlay_forces_wideband_dimensions(self, tmp_path):
        path = self._write(tmp_path, "n_r = 64\nn_fft = 512\n")
        cfg = parse_config(path, full=True)
        assert (cfg.n_r, cfg.n_fft) == (256, 4096)

    def test_validation_still_applies(self, tmp_path):
        path = self._write(tmp_path, "compressor = zip\n")
        with pytest.raises(ConfigError, match="compressor must be one of"):
            parse_config(path)
