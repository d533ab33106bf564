#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Модуль для работы с базой данных реестра запусков SGNN.
Содержит классы для управления подключением к БД и выполнения запросов.
"""

import json
import logging
import os
import sqlite3
import uuid
from typing import Dict, List, Optional

from db.schema import (
    CREATE_TABLES_QUERIES, INSERT_RUN, FINISH_RUN, INSERT_LOSS, INSERT_METRICS,
    GET_RUNS, GET_RUN_BY_ID, GET_LOSSES_BY_RUN, GET_METRICS, DELETE_RUN_DATA,
)
from stats.metrics import MetricsReport

# Настройка логирования
logger = logging.getLogger('SGNN.Database')


class DatabaseManager:
    """
    Класс для управления подключением к базе данных SQLite.
    """

    def __init__(self):
        self.connection: Optional[sqlite3.Connection] = None
        self.cursor: Optional[sqlite3.Cursor] = None
        self.current_db_path: Optional[str] = None

    def connect(self, db_path: str) -> None:
        """
        Подключается к указанной базе данных (файл создаётся при необходимости).

        Args:
            db_path: Путь к файлу базы данных
        """
        try:
            if self.connection:
                self.close()

            folder = os.path.dirname(db_path)
            if folder and not os.path.exists(folder):
                os.makedirs(folder)

            self.connection = sqlite3.connect(db_path, check_same_thread=False)
            self.connection.row_factory = sqlite3.Row
            self.cursor = self.connection.cursor()
            self.current_db_path = db_path

            self._create_tables()

            logger.info(f"Подключено к базе данных: {db_path}")
        except Exception as e:
            logger.error(f"Ошибка при подключении к БД {db_path}: {str(e)}")
            raise

    def close(self) -> None:
        """
        Закрывает соединение с базой данных.
        """
        if self.connection:
            self.connection.close()
            self.connection = None
            self.cursor = None
            self.current_db_path = None

    def _create_tables(self) -> None:
        if not self.connection:
            return

        for query in CREATE_TABLES_QUERIES:
            self.cursor.execute(query)

        self.connection.commit()


class RunsDatabase:
    """
    Класс для записи запусков обучения, журнала потерь и метрик.
    """

    def __init__(self, db_manager: DatabaseManager):
        """
        Args:
            db_manager: Экземпляр менеджера базы данных
        """
        self.db_manager = db_manager

    def _require_connection(self) -> None:
        if not self.db_manager.connection:
            raise ValueError("Не подключена база данных")

    def start_run(self, name: str, config_text: str, out_dir: str,
                  start_iteration: int = 0) -> str:
        """
        Регистрирует запуск обучения.

        Returns:
            Идентификатор запуска
        """
        self._require_connection()
        run_id = str(uuid.uuid4())
        self.db_manager.cursor.execute(INSERT_RUN, (run_id, name, config_text, out_dir,
                                                    start_iteration))
        self.db_manager.connection.commit()
        logger.info(f"Зарегистрирован запуск {name} ({run_id})")
        return run_id

    def finish_run(self, run_id: str, iteration: int) -> None:
        self._require_connection()
        self.db_manager.cursor.execute(FINISH_RUN, (iteration, run_id))
        self.db_manager.connection.commit()

    def log_loss(self, run_id: str, iteration: int, active_levels: int,
                 terms: Dict[str, float]) -> None:
        """
        Сохраняет потери одной итерации.

        Args:
            run_id: Идентификатор запуска
            iteration: Номер итерации
            active_levels: Число активных уровней
            terms: Слагаемые потери (обязателен ключ total)
        """
        self._require_connection()
        try:
            self.db_manager.cursor.execute(
                INSERT_LOSS, (run_id, iteration, active_levels, float(terms['total']),
                              json.dumps(terms, sort_keys=True)))
            self.db_manager.connection.commit()
        except Exception as e:
            logger.error(f"Ошибка при сохранении потерь итерации {iteration}: {str(e)}",
                         exc_info=True)
            raise

    def save_metrics(self, label: str, report: MetricsReport,
                     run_id: Optional[str] = None) -> None:
        self._require_connection()
        params = (label, run_id, report.l1_entire_volume, report.l1_unobserved,
                  report.l1_target, report.l1_predicted, report.n_entire_volume,
                  report.n_unobserved, report.n_target, report.n_predicted,
                  report.completion_recall)
        self.db_manager.cursor.execute(INSERT_METRICS, params)
        self.db_manager.connection.commit()
        logger.debug(f"Метрики '{label}' сохранены")

    def get_runs(self) -> List[Dict]:
        self._require_connection()
        self.db_manager.cursor.execute(GET_RUNS)
        return [dict(row) for row in self.db_manager.cursor.fetchall()]

    def get_run(self, run_id: str) -> Optional[Dict]:
        self._require_connection()
        self.db_manager.cursor.execute(GET_RUN_BY_ID, (run_id,))
        row = self.db_manager.cursor.fetchone()
        return dict(row) if row else None

    def get_losses(self, run_id: str) -> List[Dict]:
        """Журнал потерь запуска; terms разворачивается в словарь."""
        self._require_connection()
        self.db_manager.cursor.execute(GET_LOSSES_BY_RUN, (run_id,))
        out = []
        for row in self.db_manager.cursor.fetchall():
            item = dict(row)
            item['terms'] = json.loads(item['terms']) if item['terms'] else {}
            out.append(item)
        return out

    def get_metrics(self) -> List[Dict]:
        self._require_connection()
        self.db_manager.cursor.execute(GET_METRICS)
        return [dict(row) for row in self.db_manager.cursor.fetchall()]

    def delete_run(self, run_id: str) -> None:
        self._require_connection()
        try:
            for query in DELETE_RUN_DATA:
                self.db_manager.cursor.execute(query, (run_id,))
            self.db_manager.connection.commit()
            logger.info(f"Удалены данные запуска {run_id}")
        except Exception as e:
            logger.error(f"Ошибка при удалении запуска {run_id}: {str(e)}", exc_info=True)
            self.db_manager.connection.rollback()
            raise
