# results_store.py
# Optional persistence of finished experiments (SQLite by default, any SQLAlchemy URL works).
import json
from datetime import datetime

import pytz

# --- Standalone SQLAlchemy setup ---
from sqlalchemy import (Column, DateTime, Float, ForeignKey, Integer, String, Text, UniqueConstraint,
                        create_engine)
from sqlalchemy.exc import IntegrityError, OperationalError
from sqlalchemy.orm import declarative_base, relationship, sessionmaker

from helper_functions import ExperimentError, get_database_url, log

Base = declarative_base()
_sessions = {}


def get_session_factory(database_url=None):
    """ One engine + sessionmaker per URL, tables created on first use. """
    url = database_url or get_database_url()
    if url not in _sessions:
        engine = create_engine(url)
        Base.metadata.create_all(engine)
        _sessions[url] = sessionmaker(autocommit=False, autoflush=False, bind=engine)
    return _sessions[url]


# --- Database Models ---
class ExperimentRun(Base):
    __tablename__ = 'experiment_run'
    id = Column(Integer, primary_key=True)
    estimator = Column(String(32), nullable=False, index=True)
    metric = Column(String(32), nullable=False)
    spec_json = Column(Text, nullable=False)
    slope = Column(Float)
    slope_stderr = Column(Float)
    failure_count = Column(Integer, default=0, nullable=False)
    created_at = Column(DateTime, default=lambda: datetime.now(pytz.utc))
    replications = relationship("ReplicationRecord", back_populates="run", cascade="all, delete-orphan")
    def __repr__(self): return f'<ExperimentRun {self.id} {self.estimator} slope={self.slope}>'


class ReplicationRecord(Base):
    __tablename__ = 'replication_record'
    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey('experiment_run.id'), nullable=False, index=True)
    n = Column(Integer, nullable=False)
    replication = Column(Integer, nullable=False)
    # 64-bit seeds overflow signed BIGINT, so they are kept as text
    seed = Column(String(24), nullable=False)
    error = Column(Float)
    raw_error = Column(Float)
    theta_hat_json = Column(Text)
    failure = Column(Text)
    run = relationship("ExperimentRun", back_populates="replications")
    __table_args__ = ( UniqueConstraint('run_id', 'n', 'replication', name='_run_n_rep_uc'), )
    def __repr__(self): return f'<ReplicationRecord run={self.run_id} n={self.n} r={self.replication}>'


# --- Store / load ---
def store_experiment_result(result, database_url=None):
    """ Saves a finished ExperimentResult; returns the new run id. """
    session = get_session_factory(database_url)()
    try:
        run = ExperimentRun(estimator=result.spec.estimator, metric=result.spec.metric,
                            spec_json=json.dumps(result.spec.to_dict(), sort_keys=True),
                            slope=result.slope, slope_stderr=result.slope_stderr,
                            failure_count=len(result.failures))
        session.add(run)
        for rec in result.records:
            session.add(ReplicationRecord(run=run, n=rec['n'], replication=rec['replication'], seed=str(rec['seed']),
                                          error=rec['error'], raw_error=rec['raw_error'],
                                          theta_hat_json=json.dumps(rec['theta_hat'])))
        for rec in result.failures:
            session.add(ReplicationRecord(run=run, n=rec['n'], replication=rec['replication'], seed=str(rec['seed']),
                                          failure=rec['failure']))
        session.commit()
        log('INFO', f"stored experiment run {run.id} ({len(result.records)} replications, "
                    f"{len(result.failures)} failures)")
        return run.id
    except (IntegrityError, OperationalError) as e:
        session.rollback()
        raise ExperimentError(f"could not store experiment result: {e}")
    finally:
        session.close()


def load_experiment_run(run_id, database_url=None):
    session = get_session_factory(database_url)()
    try:
        run = session.get(ExperimentRun, run_id)
        if run is None:
            raise ExperimentError(f"no experiment run with id {run_id}")
        records = sorted(run.replications, key=lambda r: (r.n, r.replication))
        return {
            'id': run.id,
            'estimator': run.estimator,
            'metric': run.metric,
            'spec': json.loads(run.spec_json),
            'slope': run.slope,
            'slope_stderr': run.slope_stderr,
            'failure_count': run.failure_count,
            'created_at': run.created_at.isoformat() if run.created_at else None,
            'records': [{'n': r.n, 'replication': r.replication, 'seed': int(r.seed), 'error': r.error,
                         'raw_error': r.raw_error,
                         'theta_hat': json.loads(r.theta_hat_json) if r.theta_hat_json else None,
                         'failure': r.failure} for r in records],
        }
    except OperationalError as e:
        raise ExperimentError(f"could not load experiment run {run_id}: {e}")
    finally:
        session.close()
