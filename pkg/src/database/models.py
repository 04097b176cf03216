from sqlalchemy import Column, Integer, Float, String, DateTime, Boolean, Text, ForeignKey, JSON
from sqlalchemy.orm import declarative_base, relationship
from datetime import datetime

Base = declarative_base()


class ExperimentRun(Base):
    """One cmd_experiment invocation"""
    __tablename__ = 'experiment_runs'

    id = Column(Integer, primary_key=True)
    model = Column(String(10), nullable=False)  # DCCA, NCCA or MCCA
    generator = Column(JSON, nullable=False)
    config = Column(JSON, nullable=False)
    seed = Column(Integer, nullable=False)
    num_records = Column(Integer, default=0)
    num_failures = Column(Integer, default=0)
    created_at = Column(DateTime, default=datetime.utcnow)

    # Relationships
    results = relationship("ResultRow", back_populates="run", cascade="all, delete-orphan",
                           order_by="ResultRow.id")


class ResultRow(Base):
    """One (method, N, trial, delta) outcome"""
    __tablename__ = 'result_rows'

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey('experiment_runs.id'), nullable=False)
    method = Column(String(20), nullable=False)
    N = Column(Integer, nullable=False)
    trial = Column(Integer, nullable=False)
    delta = Column(Float)  # null for methods without processing points
    err1 = Column(Float)  # null when the fit failed
    runtime_seconds = Column(Float, default=0.0)
    sweeps = Column(Integer, default=0)
    final_off = Column(Float)
    dropped_points = Column(Integer, default=0)
    converged = Column(Boolean, default=True)
    status = Column(String(20), default="ok")
    message = Column(Text)

    # Relationships
    run = relationship("ExperimentRun", back_populates="results")
