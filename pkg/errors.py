#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Исключения SGNN.

Каждое исключение наследует встроенный тип, который выбрасывался бы в той же
ситуации, поэтому вызывающий код может ловить и то, и другое.
"""


class ConfigurationError(ValueError):
    """Некорректная конфигурация (размер вокселя, ключи конфиг-файла и т.п.)."""


class ShapeError(ValueError):
    """Несовпадение каналов, размеров или множеств координат."""


class FormatError(ValueError):
    """Повреждённый или чужой бинарный файл."""


class SamplingError(RuntimeError):
    """Не удалось выбрать допустимую позицию кропа."""


class UsageError(RuntimeError):
    """Неправильное использование API (например, backward от не-скаляра)."""


class InferenceError(RuntimeError):
    """Сеть не может обработать вход (например, пустой скан)."""
