from ncdw.stages.base_stage import BaseStage
from ncdw.stages.capacity_stage import CapacityStage
from ncdw.stages.mart_stage import MartStage
from ncdw.stages.sources_stage import GenerateStage, IngestStage
from ncdw.stages.warehouse_stage import LoadStage, StandardStage
