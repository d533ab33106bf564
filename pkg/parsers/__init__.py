# -*- coding: utf-8 -*-
"""Чтение и запись файлов: TSDF, кадры, сцены, пары, конфигурация, контрольные точки, PLY."""
