import pytest
from hypothesis import settings

from cohortlens.pipeline import build_matrix
from cohortlens.synth import CohortProfile, generate

settings.register_profile("suite", deadline=None, max_examples=60)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def unit_cohort():
    """A small but fully featured synthetic course shared across modules."""
    return generate(CohortProfile(course_id="unit-101", n_students=120, seed=42))


@pytest.fixture(scope="session")
def unit_data(unit_cohort):
    return unit_cohort.course_data()


@pytest.fixture(scope="session")
def unit_fm(unit_data):
    return build_matrix(unit_data, "t2", "a")


@pytest.fixture(scope="session")
def cli_course_dirs(tmp_path_factory):
    """Two written-to-disk synthetic courses for CLI round trips."""
    base = tmp_path_factory.mktemp("courses")
    paths = []
    for course_id, seed in (("cli-a", 7), ("cli-b", 8)):
        cohort = generate(
            CohortProfile(course_id=course_id, n_students=60, seed=seed)
        )
        paths.append(cohort.write(base / course_id))
    return tuple(paths)
