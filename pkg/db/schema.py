#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Схема базы данных реестра запусков SGNN.
Определяет таблицы запусков обучения, журнала потерь и результатов оценки.
"""

# SQL-запросы для создания таблиц

# Таблица запусков обучения
CREATE_RUNS_TABLE = """
CREATE TABLE IF NOT EXISTS runs (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    run_id TEXT UNIQUE,
    name TEXT,
    config TEXT,
    out_dir TEXT,
    start_iteration INTEGER DEFAULT 0,
    finished_iteration INTEGER,
    created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
)
"""

# Таблица журнала потерь (по итерациям)
CREATE_LOSSES_TABLE = """
CREATE TABLE IF NOT EXISTS losses (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    run_id TEXT,
    iteration INTEGER,
    active_levels INTEGER,
    total REAL,
    terms TEXT,
    created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
)
"""

# Таблица результатов оценки
CREATE_METRICS_TABLE = """
CREATE TABLE IF NOT EXISTS metrics (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    label TEXT,
    run_id TEXT,
    l1_entire_volume REAL,
    l1_unobserved REAL,
    l1_target REAL,
    l1_predicted REAL,
    n_entire_volume INTEGER,
    n_unobserved INTEGER,
    n_target INTEGER,
    n_predicted INTEGER,
    completion_recall REAL,
    created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
)
"""

CREATE_LOSSES_INDEX = """
CREATE INDEX IF NOT EXISTS idx_losses_run ON losses (run_id, iteration)
"""

# Список всех запросов для создания таблиц
CREATE_TABLES_QUERIES = [
    CREATE_RUNS_TABLE,
    CREATE_LOSSES_TABLE,
    CREATE_METRICS_TABLE,
    CREATE_LOSSES_INDEX,
]

# Запросы для вставки данных

INSERT_RUN = """
INSERT INTO runs (run_id, name, config, out_dir, start_iteration)
VALUES (?, ?, ?, ?, ?)
"""

FINISH_RUN = """
UPDATE runs SET finished_iteration = ? WHERE run_id = ?
"""

INSERT_LOSS = """
INSERT INTO losses (run_id, iteration, active_levels, total, terms)
VALUES (?, ?, ?, ?, ?)
"""

INSERT_METRICS = """
INSERT INTO metrics (
    label, run_id, l1_entire_volume, l1_unobserved, l1_target, l1_predicted,
    n_entire_volume, n_unobserved, n_target, n_predicted, completion_recall
) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
"""

# Запросы для получения данных

GET_RUNS = """
SELECT * FROM runs ORDER BY created_at DESC, id DESC
"""

GET_RUN_BY_ID = """
SELECT * FROM runs WHERE run_id = ?
"""

GET_LOSSES_BY_RUN = """
SELECT iteration, active_levels, total, terms FROM losses
WHERE run_id = ? ORDER BY iteration
"""

GET_METRICS = """
SELECT * FROM metrics ORDER BY id
"""

DELETE_RUN_DATA = [
    "DELETE FROM losses WHERE run_id = ?",
    "DELETE FROM metrics WHERE run_id = ?",
    "DELETE FROM runs WHERE run_id = ?",
]
