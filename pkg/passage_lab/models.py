# Copyright 2016, 2023 John Rofrano. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
# https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""
Models for archived Monte Carlo runs

A RunRecord stores survivor counts rather than ratios, so runs made on
different machines with different seeds can be pooled exactly.
"""
import logging
from datetime import datetime, timezone
from enum import Enum
from typing import Sequence

from flask import Flask
from flask_sqlalchemy import SQLAlchemy

from passage_lab.errors import DataValidationError
from passage_lab.passage import SurvivalCurve

logger = logging.getLogger("passage_lab")

# Create the SQLAlchemy object to be initialized later
db = SQLAlchemy()


def init_db(app):
    """Initialize the SQLAlchemy app"""
    RunRecord.init_db(app)


class RunKind(Enum):
    """Enumeration of archived run types"""

    ESTIMATE = 0
    LAMBDA_STAR = 1


def _utcnow():
    return datetime.now(timezone.utc)


class RunRecord(db.Model):
    """Class that represents one archived survival run"""

    id = db.Column(db.Integer, primary_key=True)
    kind = db.Column(db.Enum(RunKind), nullable=False, server_default=(RunKind.ESTIMATE.name))
    manifest_hash = db.Column(db.String(64), nullable=False, index=True)
    kernel = db.Column(db.JSON, nullable=False)
    c = db.Column(db.Float, nullable=False)
    step = db.Column(db.Float, nullable=False)
    seed = db.Column(db.BigInteger, nullable=False)
    n_paths = db.Column(db.Integer, nullable=False)
    horizons = db.Column(db.JSON, nullable=False)
    survivors = db.Column(db.JSON, nullable=False)
    code_version = db.Column(db.String(32), nullable=False)
    created = db.Column(db.DateTime(timezone=True), nullable=False, default=_utcnow)

    def __repr__(self):
        return f"<RunRecord {self.manifest_hash} id=[{self.id}]>"

    def create(self):
        """Creates a RunRecord in the database"""
        logger.info("Creating run %s", self.manifest_hash)
        self.id = None
        db.session.add(self)
        db.session.commit()

    def update(self):
        """Updates a RunRecord in the database"""
        logger.info("Saving run %s", self.manifest_hash)
        if not self.id:
            raise DataValidationError("Update called with empty ID field")
        db.session.commit()

    def delete(self):
        """Removes a RunRecord from the data store"""
        logger.info("Deleting run %s", self.manifest_hash)
        db.session.delete(self)
        db.session.commit()

    @property
    def curve(self) -> SurvivalCurve:
        """The stored counts as a SurvivalCurve"""
        return SurvivalCurve(
            tuple(float(u) for u in self.horizons),
            tuple(int(count) for count in self.survivors),
            int(self.n_paths),
        )

    def serialize(self) -> dict:
        """Serializes a RunRecord into a dictionary"""
        return {
            "id": self.id,
            "kind": self.kind.name,
            "manifest_hash": self.manifest_hash,
            "kernel": self.kernel,
            "c": self.c,
            "step": self.step,
            "seed": self.seed,
            "n_paths": self.n_paths,
            "horizons": list(self.horizons),
            "survivors": list(self.survivors),
            "code_version": self.code_version,
        }

    def deserialize(self, data: dict):
        """Deserializes a RunRecord from a dictionary"""
        try:
            self.kind = getattr(RunKind, data.get("kind", RunKind.ESTIMATE.name))
            self.manifest_hash = str(data["manifest_hash"])
            if not isinstance(data["kernel"], dict):
                raise DataValidationError(
                    f"Invalid type for dict [kernel]: {type(data['kernel'])}"
                )
            self.kernel = data["kernel"]
            self.c = float(data["c"])
            self.step = float(data["step"])
            if isinstance(data["seed"], bool) or not isinstance(data["seed"], int):
                raise DataValidationError(f"Invalid type for integer [seed]: {type(data['seed'])}")
            self.seed = data["seed"]
            self.n_paths = int(data["n_paths"])
            self.horizons = [float(u) for u in data["horizons"]]
            self.survivors = [int(count) for count in data["survivors"]]
            self.code_version = str(data["code_version"])
        except AttributeError as error:
            raise DataValidationError("Invalid attribute: " + error.args[0]) from error
        except KeyError as error:
            raise DataValidationError("Invalid run: missing " + error.args[0]) from error
        except (TypeError, ValueError) as error:
            raise DataValidationError(
                "Invalid run: body of request contained bad or no data " + str(error)
            ) from error
        # the counts must form a valid curve
        self.curve  # pylint: disable=pointless-statement
        return self

    ##################################################
    # CLASS METHODS
    ##################################################

    @classmethod
    def init_db(cls, app: Flask):
        """Initializes the database session"""
        logger.info("Initializing database")
        db.init_app(app)
        app.app_context().push()
        db.create_all()

    @classmethod
    def all(cls) -> list:
        """Returns all of the RunRecords in the database"""
        return cls.query.all()

    @classmethod
    def find(cls, record_id: int):
        """Finds a RunRecord by its ID"""
        return db.session.get(cls, record_id)

    @classmethod
    def find_by_hash(cls, manifest_hash: str) -> list:
        """Returns all RunRecords made from the given manifest"""
        return cls.query.filter(cls.manifest_hash == manifest_hash).all()

    @classmethod
    def find_matching(cls, kernel: dict, c: float, step: float, horizons: Sequence[float]) -> list:
        """Returns all RunRecords that can be pooled with the given setup"""
        horizons = [float(u) for u in horizons]
        candidates = cls.query.filter(cls.c == c, cls.step == step).all()
        return [
            record
            for record in candidates
            if record.kernel == kernel and [float(u) for u in record.horizons] == horizons
        ]

    @classmethod
    def pool(cls, records: Sequence["RunRecord"]) -> SurvivalCurve:
        """Sums the counts of runs that share everything but the seed"""
        if not records:
            raise DataValidationError("nothing to pool")
        first = records[0]
        for record in records[1:]:
            if (
                record.kernel != first.kernel
                or record.c != first.c
                or record.step != first.step
                or list(record.horizons) != list(first.horizons)
            ):
                raise DataValidationError(
                    f"run {record.id} differs from run {first.id} in kernel, c, step or horizons"
                )
        seeds = [record.seed for record in records]
        if len(set(seeds)) != len(seeds):
            raise DataValidationError("pooled runs must have distinct seeds")
        curve = SurvivalCurve.pool([record.curve for record in records])
        logger.info("Pooled %d runs into %d trials", len(records), curve.trials)
        return curve
