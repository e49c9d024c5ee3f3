import numpy as np
import pytest

from capce.data import (ColumnSchema, EmptyAfterFiltering, MissingColumn,
                        ParseError, TooFewRecords, TwoSampleDataset,
                        load_joint_csv, load_two_sample_csvs, split_train_test,
                        write_joint_csv)

SCHEMA = ColumnSchema(treatment_col="educ", outcome_col="wage",
                      instrument_col="meduc", covariate_cols=("IQ",))


def write_csv(path, rows, header="wage,educ,meduc,IQ"):
    path.write_text(header + "\n" + "\n".join(rows) + "\n", encoding="utf-8")
    return str(path)


class TestLoadJointCsv:
    def test_clean_rows_all_retained(self, tmp_path):
        rows = [f"{100 + i},{9 + i % 8},{8 + i % 5},{90 + i}" for i in range(10)]
        ds = load_joint_csv(write_csv(tmp_path / "d.csv", rows), SCHEMA)
        assert ds.n1 == ds.n2 == 10
        assert ds.joint
        assert ds.d == 1
        assert ds.x[0] == 9.0 and ds.y[0] == 100.0 and ds.z1[0] == 8.0
        assert ds.w[0, 0] == 90.0

    def test_rows_with_missing_values_dropped(self, tmp_path):
        rows = ["100,12,8,95", "200,13,NA,101", "300,14,9,", "400,10,7,103",
                "500,16,oops,99"]
        ds = load_joint_csv(write_csv(tmp_path / "d.csv", rows), SCHEMA)
        assert ds.n1 == ds.n2 == 2
        assert list(ds.y) == [100.0, 400.0]

    def test_filtering_monotone_in_valid_rows(self, tmp_path):
        rows = ["100,12,8,95", "200,13,NA,101", "400,10,7,103"]
        ds1 = load_joint_csv(write_csv(tmp_path / "a.csv", rows), SCHEMA)
        ds2 = load_joint_csv(write_csv(tmp_path / "b.csv",
                                       rows + ["500,15,9,110"]), SCHEMA)
        assert ds2.n1 == ds1.n1 + 1
        assert ds2.n2 == ds1.n2 + 1

    def test_all_instrument_missing_raises(self, tmp_path):
        rows = ["100,12,NA,95", "200,13,,101"]
        with pytest.raises(EmptyAfterFiltering):
            load_joint_csv(write_csv(tmp_path / "d.csv", rows), SCHEMA)

    def test_missing_column_raises(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", ["100,12,95"],
                         header="wage,educ,IQ")
        with pytest.raises(MissingColumn):
            load_joint_csv(path, SCHEMA)

    def test_ragged_row_raises_parse_error(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", ["100,12,8,95", "1,2,3"])
        with pytest.raises(ParseError) as err:
            load_joint_csv(path, SCHEMA)
        assert err.value.row == 2

    def test_non_finite_cells_count_as_missing(self, tmp_path):
        rows = ["100,12,8,95", "inf,13,9,100", "200,nan,7,99"]
        ds = load_joint_csv(write_csv(tmp_path / "d.csv", rows), SCHEMA)
        assert ds.n1 == 1

    def test_roundtrip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(3)
        n = 40
        z = rng.standard_normal(n)
        ds = TwoSampleDataset(x=rng.standard_normal(n) * np.pi,
                              w=rng.standard_normal((n, 1)) / 3,
                              z1=z, y=rng.standard_normal(n) * 1e3,
                              z2=z.copy(), joint=True, schema=SCHEMA)
        path = tmp_path / "rt.csv"
        write_joint_csv(path, ds)
        back = load_joint_csv(str(path), SCHEMA)
        assert np.array_equal(back.x, ds.x)
        assert np.array_equal(back.y, ds.y)
        assert np.array_equal(back.z1, ds.z1)
        assert np.array_equal(back.w, ds.w)


class TestTwoSampleCsvs:
    def test_pre_split_input(self, tmp_path):
        p1 = tmp_path / "s1.csv"
        p1.write_text("educ,meduc,IQ\n12,8,100\n14,10,110\n", encoding="utf-8")
        p2 = tmp_path / "s2.csv"
        p2.write_text("wage,meduc\n500,8\n700,10\n900,12\n", encoding="utf-8")
        ds = load_two_sample_csvs(str(p1), str(p2), SCHEMA)
        assert (ds.n1, ds.n2) == (2, 3)
        assert not ds.joint


class TestSplitTrainTest:
    def test_exact_fraction(self):
        ds = _dummy(100)
        train, test = split_train_test(ds, 0.2, seed=7)
        assert (train.n1, train.n2, test.n1, test.n2) == (80, 80, 20, 20)

    def test_same_seed_same_split(self):
        ds = _dummy(50)
        a1, a2 = split_train_test(ds, 0.3, seed=9)
        b1, b2 = split_train_test(ds, 0.3, seed=9)
        assert np.array_equal(a1.x, b1.x) and np.array_equal(a2.y, b2.y)

    def test_floor_on_test_side(self):
        # n=3 at fraction 0.5: test gets floor(1.5)=1, train keeps 2
        ds = _dummy(3)
        train, test = split_train_test(ds, 0.5, seed=0)
        assert (train.n1, test.n1) == (2, 1)
        assert (train.n2, test.n2) == (2, 1)

    def test_union_is_original_multiset(self):
        ds = _dummy(23)
        train, test = split_train_test(ds, 0.25, seed=4)
        assert sorted(np.concatenate([train.x, test.x])) == sorted(ds.x)
        assert sorted(np.concatenate([train.y, test.y])) == sorted(ds.y)

    def test_too_few_records(self):
        with pytest.raises(TooFewRecords):
            split_train_test(_dummy(1, n2=5), 0.5, seed=0)
        with pytest.raises(TooFewRecords):
            split_train_test(_dummy(4), 0.01, seed=0)


def _dummy(n1, n2=None):
    n2 = n1 if n2 is None else n2
    x = np.arange(n1, dtype=float)
    return TwoSampleDataset(x=x, w=x[:, None] * 2, z1=x + 0.5,
                            y=np.arange(n2, dtype=float) * 3,
                            z2=np.arange(n2, dtype=float), joint=False)


class TestSchema:
    def test_duplicate_roles_rejected(self):
        with pytest.raises(ValueError):
            ColumnSchema("x", "x", "z")

    def test_zero_covariates_allowed(self):
        s = ColumnSchema("x", "y", "z")
        assert s.d == 0


class TestDatasetInvariants:
    def test_covariate_length_enforced(self):
        with pytest.raises(ValueError):
            TwoSampleDataset(x=[1.0, 2.0], w=[[1.0]], z1=[0.0, 1.0],
                             y=[1.0], z2=[0.0])

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            TwoSampleDataset(x=[np.nan], w=[[1.0]], z1=[0.0],
                             y=[1.0], z2=[0.0])

    def test_joint_take_keeps_rows_paired(self):
        ds = _dummy(6)
        ds = TwoSampleDataset(x=ds.x, w=ds.w, z1=ds.z1, y=ds.x * 10,
                              z2=ds.z1.copy(), joint=True)
        sub = ds.take(np.array([3, 1, 3]))
        assert np.array_equal(sub.y, sub.x * 10)
